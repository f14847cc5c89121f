//! Parametrized quantum policies for reinforcement learning.
//!
//! Everything runs on an exact dense statevector simulator ([`qsim`]). On top of it:
//!
//! - [`pqc`]: the alternating encoding/variational circuit, raw (Born-rule) and softmax
//!   policies, and their exact log-policy gradients via the parameter-shift rule.
//! - [`envs`]: classic control benchmarks, circuit-generated labelling tasks and the
//!   discrete-logarithm environments behind one episodic interface.
//! - [`train`]: REINFORCE with a linear value baseline, grouped Adam, β annealing and an
//!   MLP comparator policy.
//! - [`dlp`]: number theory, the discrete-log concept class, the interval-overlap feature
//!   classifier and its argmin trainer, and cliff-walk value bounds.

pub mod dlp;
pub mod envs;
mod error;
pub mod pqc;
pub mod qsim;
pub mod train;

pub use error::{Error, Result};

/// Seeded generator used for every stochastic routine in the crate.
///
/// ChaCha8 is stream-stable across platforms and `rand` releases, which keeps
/// learning curves bit-reproducible.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Build a [`SimRng`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Derive an independent child seed, e.g. one per (run, batch, episode).
///
/// SplitMix64 finaliser over the combined words.
pub fn derive_seed(parent: u64, stream: &[u64]) -> u64 {
    let mut z = parent ^ 0x9E37_79B9_7F4A_7C15;
    for &w in stream {
        z = z.wrapping_add(w.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

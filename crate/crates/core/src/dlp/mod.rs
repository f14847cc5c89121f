//! Discrete-logarithm concept class and its interval-overlap quantum classifier.
//!
//! Elements of `Z_p^*` are handled through their discrete logarithms. The feature state of
//! `x` is a uniform superposition over the `2^k` consecutive powers starting at `log x`,
//! and the state for a candidate offset `s'` is a uniform superposition over the
//! `(p-1)/2` powers starting at `s'`. Their squared overlap only depends on the length of
//! the intersection of two arcs on the cycle `Z_{p-1}`, so nothing of size `2^n` is ever
//! built.

mod bounds;
mod classifier;

pub use bounds::{cliffwalk_bounds, v_rand, BoundReport};
pub use classifier::{
    accuracy, accuracy_noisy, classify, classify_noisy, feature_inner_product, interval_overlap, majority_vote,
    noisy_inner_product, train_classifier, ClassifierConfig, DlpAgent, NoiseModel,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::{Error, Result};

/// Largest modulus for which brute-force logarithms (and the instance's log table) are allowed.
pub const MAX_BRUTE_FORCE_P: u64 = 1 << 24;

/// `base^exponent mod modulus` by square-and-multiply.
pub fn mod_exp(base: u64, exponent: u64, modulus: u64) -> u64 {
    assert!(modulus >= 2, "modulus must be ≥ 2");
    let m = modulus as u128;
    let mut result: u128 = 1;
    let mut b = base as u128 % m;
    let mut e = exponent;
    while e > 0 {
        if e & 1 == 1 {
            result = result * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    result as u64
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Whether `g` generates `Z_p^*` for prime `p`: `g^{(p-1)/q} ≠ 1` for every prime `q | p-1`.
pub fn is_generator(g: u64, p: u64) -> bool {
    if g == 0 || g >= p {
        return false;
    }
    prime_factors(p - 1).iter().all(|q| mod_exp(g, (p - 1) / q, p) != 1)
}

pub fn smallest_generator(p: u64) -> Result<u64> {
    if !is_prime(p) || p < 3 {
        return Err(Error::Domain(format!("{p} is not an odd prime")));
    }
    (2..p).find(|&g| is_generator(g, p)).ok_or_else(|| Error::Domain(format!("no generator mod {p}")))
}

/// `(p, g, s)`: prime modulus, generator of `Z_p^*`, secret offset in `Z_{p-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DlpInstance {
    p: u64,
    g: u64,
    s: u64,
    log: Vec<u32>,
}

impl DlpInstance {
    /// Builds the full table of logarithms, which also confirms that `g` generates `Z_p^*`.
    pub fn new(p: u64, g: u64, s: u64) -> Result<Self> {
        if p > MAX_BRUTE_FORCE_P {
            return Err(Error::OracleRefused(format!("p = {p} exceeds the brute-force limit {MAX_BRUTE_FORCE_P}")));
        }
        if p < 3 || !is_prime(p) {
            return Err(Error::Config(format!("{p} is not an odd prime")));
        }
        if s >= p - 1 {
            return Err(Error::Config(format!("offset {s} not in Z_{}", p - 1)));
        }
        let mut log = vec![u32::MAX; p as usize];
        let mut x = 1u64;
        for y in 0..p - 1 {
            if log[x as usize] != u32::MAX {
                return Err(Error::Config(format!("{g} does not generate Z_{p}^* (order {y})")));
            }
            log[x as usize] = y as u32;
            x = x * g % p;
        }
        if x != 1 {
            return Err(Error::Config(format!("{g} does not generate Z_{p}^*")));
        }
        Ok(Self { p, g, s, log })
    }

    /// Smallest generator and a uniformly random offset.
    pub fn random<R: Rng + ?Sized>(p: u64, rng: &mut R) -> Result<Self> {
        let g = smallest_generator(p)?;
        Self::new(p, g, rng.random_range(0..p - 1))
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn g(&self) -> u64 {
        self.g
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    /// Group order `p - 1`.
    pub fn order(&self) -> u64 {
        self.p - 1
    }

    /// `⌈log₂(p-1)⌉`
    pub fn n_bits(&self) -> u32 {
        64 - (self.p - 2).leading_zeros()
    }

    pub fn with_offset(&self, s: u64) -> Result<Self> {
        if s >= self.order() {
            return Err(Error::Config(format!("offset {s} not in Z_{}", self.order())));
        }
        Ok(Self { s, ..self.clone() })
    }

    pub fn contains(&self, x: u64) -> bool {
        (1..self.p).contains(&x)
    }

    /// Table lookup of `log_g x`.
    pub fn log(&self, x: u64) -> Result<u64> {
        if !self.contains(x) {
            return Err(Error::Domain(format!("{x} ∉ Z_{}^*", self.p)));
        }
        Ok(self.log[x as usize] as u64)
    }

    pub fn pow(&self, y: u64) -> u64 {
        mod_exp(self.g, y, self.p)
    }
}

/// Plain-text instance record `p g s seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceRecord {
    pub p: u64,
    pub g: u64,
    pub s: u64,
    pub seed: u64,
}

impl InstanceRecord {
    pub fn instance(&self) -> Result<DlpInstance> {
        DlpInstance::new(self.p, self.g, self.s)
    }
}

impl fmt::Display for InstanceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.p, self.g, self.s, self.seed)
    }
}

impl FromStr for InstanceRecord {
    type Err = Error;
    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<u64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Config(format!("bad instance record {line:?}"))))
            .collect::<Result<_>>()?;
        match fields[..] {
            [p, g, s, seed] => Ok(Self { p, g, s, seed }),
            _ => Err(Error::Config(format!("instance record needs 4 fields: {line:?}"))),
        }
    }
}

/// Linear scan for `y` with `g^y ≡ x (mod p)`; independent of the instance's table.
pub fn discrete_log_bruteforce(x: u64, instance: &DlpInstance) -> Result<u64> {
    let p = instance.p;
    if p > MAX_BRUTE_FORCE_P {
        return Err(Error::OracleRefused(format!("p = {p} too large for brute force")));
    }
    if !instance.contains(x) {
        return Err(Error::Domain(format!("{x} ∉ Z_{p}^*")));
    }
    let mut acc = 1u64;
    for y in 0..p - 1 {
        if acc == x {
            return Ok(y);
        }
        acc = acc * instance.g % p;
    }
    Err(Error::Domain(format!("{x} has no logarithm base {}", instance.g)))
}

/// `+1` iff `log_g x ∈ [s, s + (p-3)/2]` on the cycle `Z_{p-1}`.
pub fn label(instance: &DlpInstance, x: u64) -> Result<i8> {
    let y = instance.log(x)?;
    Ok(label_of_log(y, instance.s, instance.order()))
}

pub(crate) fn label_of_log(y: u64, s: u64, order: u64) -> i8 {
    if (y + order - s) % order < order / 2 {
        1
    } else {
        -1
    }
}

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{label_of_log, DlpInstance};
use crate::{Error, Result};

/// Length of the intersection of the arcs `[a, a+alen)` and `[b, b+blen)` on `Z_n`.
/// Requires `alen + blen ≤ n` so the arcs meet in at most one piece per wrap.
pub fn interval_overlap(a: u64, alen: u64, b: u64, blen: u64, n: u64) -> u64 {
    debug_assert!(alen + blen <= n);
    let a = (a + n - b % n) % n;
    let mut total = 0;
    if a < blen {
        total += (a + alen).min(blen) - a;
    }
    if a + alen > n {
        total += (a + alen - n).min(blen);
    }
    total
}

/// How inner products are estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Exact,
    /// `Binomial(shots, v) / shots`
    Shots(u64),
    /// `v + e`, `e ~ U[-half_width, half_width]`
    Bounded(f64),
}

impl NoiseModel {
    fn apply<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Exact => v,
            NoiseModel::Shots(r) => noisy_inner_product(v, r, rng),
            NoiseModel::Bounded(h) if h > 0.0 => v + rng.random_range(-h..=h),
            NoiseModel::Bounded(_) => v,
        }
    }
}

/// Feature-superposition size `2^k` and the inner-product noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub k: u32,
    pub noise: NoiseModel,
}

impl ClassifierConfig {
    pub fn new(instance: &DlpInstance, k: u32, noise: NoiseModel) -> Result<Self> {
        check_k(instance, k)?;
        if let NoiseModel::Shots(0) = noise {
            return Err(Error::Config("shot count must be ≥ 1".into()));
        }
        Ok(Self { k, noise })
    }

    /// `k = ⌊n − t·log₂ n⌋`, clamped at 0.
    pub fn k_from_t(n_bits: u32, t: f64) -> u32 {
        let n = n_bits as f64;
        (n - t * n.log2()).floor().max(0.0) as u32
    }

    /// `Δ = 2^{k+1}/(p-1)`
    pub fn delta(&self, instance: &DlpInstance) -> f64 {
        (1u64 << (self.k + 1)) as f64 / instance.order() as f64
    }
}

fn check_k(instance: &DlpInstance, k: u32) -> Result<u64> {
    let len = 1u64.checked_shl(k).filter(|&l| l <= instance.order() / 2);
    len.ok_or_else(|| Error::Config(format!("2^{k} exceeds (p-1)/2 = {}", instance.order() / 2)))
}

/// Overlap length and the two arc lengths `(|I|, 2^k, (p-1)/2)`.
fn overlap_parts(x: u64, s_prime: u64, instance: &DlpInstance, k: u32) -> Result<(u64, u64, u64)> {
    let len = check_k(instance, k)?;
    let n = instance.order();
    let half = n / 2;
    let y = instance.log(x)?;
    Ok((interval_overlap(y, len, s_prime % n, half, n), len, half))
}

/// `|⟨φ(x)|φ_{s'}⟩|² = |I|² / (2^k · (p-1)/2)`.
pub fn feature_inner_product(x: u64, s_prime: u64, instance: &DlpInstance, k: u32) -> Result<f64> {
    let (i, len, half) = overlap_parts(x, s_prime, instance, k)?;
    Ok((i * i) as f64 / (len * half) as f64)
}

/// `+1` iff `|⟨φ(x)|φ_{s'}⟩|²/Δ ≥ 1/2`, evaluated exactly as `2|I|² ≥ 4^k`.
pub fn classify(x: u64, s_prime: u64, instance: &DlpInstance, k: u32) -> Result<i8> {
    let (i, len, _) = overlap_parts(x, s_prime, instance, k)?;
    Ok(if 2 * i * i >= len * len { 1 } else { -1 })
}

pub fn classify_noisy<R: Rng + ?Sized>(
    x: u64,
    s_prime: u64,
    instance: &DlpInstance,
    config: &ClassifierConfig,
    rng: &mut R,
) -> Result<i8> {
    if config.noise == NoiseModel::Exact {
        return classify(x, s_prime, instance, config.k);
    }
    let v = config.noise.apply(feature_inner_product(x, s_prime, instance, config.k)?, rng);
    Ok(if v / config.delta(instance) >= 0.5 { 1 } else { -1 })
}

/// `Binomial(shots, true_value) / shots`
pub fn noisy_inner_product<R: Rng + ?Sized>(true_value: f64, shots: u64, rng: &mut R) -> f64 {
    assert!(shots >= 1, "shot count must be ≥ 1");
    let k = Binomial::new(shots, true_value.clamp(0.0, 1.0)).expect("probability clamped").sample(rng);
    k as f64 / shots as f64
}

/// Argmin of the noisy training error over candidates `s' = log x`, `x ∈ training`.
/// Ties go to the smallest candidate.
pub fn train_classifier<R: Rng + ?Sized>(
    instance: &DlpInstance,
    training: &[u64],
    config: &ClassifierConfig,
    rng: &mut R,
) -> Result<u64> {
    if training.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let labels: Vec<i8> = training.iter().map(|&x| super::label(instance, x)).collect::<Result<_>>()?;
    let mut best: Option<(usize, u64)> = None;
    for &c in training {
        let candidate = instance.log(c)?;
        let mut errors = 0;
        for (&x, &y) in training.iter().zip(&labels) {
            if classify_noisy(x, candidate, instance, config, rng)? != y {
                errors += 1;
            }
        }
        if best.is_none_or(|b| (errors, candidate) < b) {
            best = Some((errors, candidate));
        }
    }
    Ok(best.expect("non-empty training set").1)
}

/// Exhaustive noiseless accuracy of `h_{s'}` over `Z_p^*`.
pub fn accuracy(instance: &DlpInstance, s_prime: u64, k: u32) -> Result<f64> {
    let n = instance.order();
    let mut correct = 0u64;
    for x in 1..instance.p() {
        if classify(x, s_prime, instance, k)? == super::label(instance, x)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Exhaustive accuracy with one noisy evaluation per element.
pub fn accuracy_noisy<R: Rng + ?Sized>(
    instance: &DlpInstance,
    s_prime: u64,
    config: &ClassifierConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut correct = 0u64;
    for x in 1..instance.p() {
        let y = label_of_log(instance.log(x)?, instance.s(), instance.order());
        if classify_noisy(x, s_prime, instance, config, rng)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / instance.order() as f64)
}

/// Majority of an odd number of ±1 votes.
pub fn majority_vote(votes: usize, mut vote: impl FnMut() -> Result<i8>) -> Result<i8> {
    if votes % 2 == 0 {
        return Err(Error::Config(format!("majority vote needs an odd count, got {votes}")));
    }
    let mut sum = 0i64;
    for _ in 0..votes {
        sum += vote()? as i64;
    }
    Ok(if sum > 0 { 1 } else { -1 })
}

/// Acts with a trained classifier: label `+1` is action 0, label `-1` is action 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DlpAgent {
    pub instance: DlpInstance,
    pub s_prime: u64,
    pub config: ClassifierConfig,
    pub votes: usize,
}

impl DlpAgent {
    pub fn new(instance: DlpInstance, s_prime: u64, config: ClassifierConfig, votes: usize) -> Result<Self> {
        if votes % 2 == 0 {
            return Err(Error::Config(format!("vote count must be odd, got {votes}")));
        }
        Ok(Self { instance, s_prime, config, votes })
    }

    pub fn predict<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> Result<i8> {
        majority_vote(self.votes, || classify_noisy(x, self.s_prime, &self.instance, &self.config, rng))
    }

    pub fn act<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> Result<usize> {
        Ok(crate::envs::label_to_action(self.predict(x, rng)?))
    }
}

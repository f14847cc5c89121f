//! Finite-shot estimates of observable expectations.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{prepare_state, ParamVector, PqcTopology};
use crate::qsim::{ObservableSpec, StateVector, Term};
use crate::{Error, Result};

fn binomial_fraction<R: Rng + ?Sized>(shots: u64, p: f64, rng: &mut R) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let k = Binomial::new(shots, p).expect("p clamped to [0,1]").sample(rng);
    k as f64 / shots as f64
}

/// Mean of `shots` single-shot eigenvalue samples of one term.
pub fn noisy_term_expectation<R: Rng + ?Sized>(term: &Term, psi: &StateVector, shots: u64, rng: &mut R) -> Result<f64> {
    if shots == 0 {
        return Err(Error::Config("shot count must be ≥ 1".into()));
    }
    let exact = term.expectation(psi)?;
    Ok(match term {
        Term::Pauli(p) if p.ops().is_empty() => 1.0,
        // eigenvalue +1 with probability (1 + ⟨H⟩)/2
        Term::Pauli(_) => 2.0 * binomial_fraction(shots, (1.0 + exact) / 2.0, rng) - 1.0,
        Term::Projector(_) => binomial_fraction(shots, exact, rng),
    })
}

pub(crate) fn noisy_observable<R: Rng + ?Sized>(obs: &ObservableSpec, psi: &StateVector, shots: u64, rng: &mut R) -> Result<f64> {
    obs.terms().iter().map(|(w, t)| Ok(w * noisy_term_expectation(t, psi, shots, rng)?)).sum()
}

/// Shot-noise estimate of `⟨obs⟩_{s,θ}`; each term is sampled independently with `shots` shots.
pub fn noisy_expectation<R: Rng + ?Sized>(
    s: &[f64],
    params: &ParamVector,
    topo: &PqcTopology,
    obs: &ObservableSpec,
    shots: u64,
    rng: &mut R,
) -> Result<f64> {
    if shots == 0 {
        return Err(Error::Config("shot count must be ≥ 1".into()));
    }
    let psi = prepare_state(topo, s, params)?;
    obs.check_qubits(topo.n_qubits())?;
    noisy_observable(obs, &psi, shots, rng)
}

#[cfg(test)]
mod tests {
    use super::super::Entangler;
    use super::*;
    use crate::qsim::{Gate, PauliString};
    use crate::rng_from_seed;

    #[test]
    fn eigenstate_has_no_noise() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap().without_hadamard_prefix();
        let p = ParamVector::new(&t, 0, vec![0.3, 0.0], vec![], vec![]).unwrap();
        let z = ObservableSpec::single(Term::Pauli(PauliString::zs(&[0]).unwrap()));
        let mut rng = rng_from_seed(0);
        assert_eq!(noisy_expectation(&[], &p, &t, &z, 1_000_000, &mut rng).unwrap(), 1.0);
    }

    #[test]
    fn projector_estimate_within_three_sigma() {
        let mut psi = StateVector::zero(2).unwrap();
        psi.apply(&Gate::H(0)).unwrap();
        psi.apply(&Gate::H(1)).unwrap();
        let term = Term::projector(vec![3]);
        let r = 10_000;
        let sigma = (0.25f64 * 0.75 / r as f64).sqrt();
        let mut rng = rng_from_seed(1);
        let est = noisy_term_expectation(&term, &psi, r, &mut rng).unwrap();
        assert!((est - 0.25).abs() <= 3.0 * sigma);
        assert!(3.0 * sigma <= 0.013);
    }

    #[test]
    fn estimator_is_unbiased() {
        let t = PqcTopology::new(2, 1, Entangler::OneToOne, false, 2).unwrap();
        let mut rng = rng_from_seed(2);
        let p = ParamVector::init(&t, 0, &mut rng);
        let s = [0.3, -0.8];
        let obs =
            ObservableSpec::new(vec![(0.7, Term::Pauli(PauliString::zs(&[0, 1]).unwrap())), (-0.4, Term::projector(vec![1, 2]))]);
        let exact = prepare_state(&t, &s, &p).unwrap().expectation(&obs).unwrap();
        let (n, r) = (1000, 100);
        let samples: Vec<f64> = (0..n).map(|_| noisy_expectation(&s, &p, &t, &obs, r, &mut rng).unwrap()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        // per-estimate variance ≤ (Σ|w|·range)²/R
        let sigma = (0.7 * 2.0 + 0.4 * 1.0) / (r as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * sigma / (n as f64).sqrt());
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(var <= sigma * sigma);
    }

    #[test]
    fn zero_shots_rejected() {
        let psi = StateVector::zero(1).unwrap();
        let mut rng = rng_from_seed(3);
        assert!(noisy_term_expectation(&Term::projector(vec![0]), &psi, 0, &mut rng).is_err());
    }
}

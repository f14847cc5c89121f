use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use super::StateVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Tensor product of single-qubit Paulis; qubits not listed carry the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<(usize, Pauli)>,
}

impl PauliString {
    pub fn new(mut ops: Vec<(usize, Pauli)>) -> Result<Self> {
        ops.sort_by_key(|&(q, _)| q);
        if ops.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("Pauli string acts twice on one qubit".into()));
        }
        Ok(Self { ops })
    }

    /// `Z_{q0} Z_{q1} …`
    pub fn zs(qubits: &[usize]) -> Result<Self> {
        Self::new(qubits.iter().map(|&q| (q, Pauli::Z)).collect())
    }

    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    fn is_diagonal(&self) -> bool {
        self.ops.iter().all(|&(_, p)| p == Pauli::Z)
    }

    fn max_qubit(&self) -> Option<usize> {
        self.ops.last().map(|&(q, _)| q)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return write!(f, "I");
        }
        for (q, p) in &self.ops {
            write!(f, "{p:?}{q}")?;
        }
        Ok(())
    }
}

/// A Hermitian term of an observable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// Eigenvalues ±1.
    Pauli(PauliString),
    /// Projector onto a set of computational basis states; eigenvalues {0, 1}.
    Projector(Vec<usize>),
}

impl Term {
    pub fn projector(mut basis: Vec<usize>) -> Term {
        basis.sort_unstable();
        basis.dedup();
        Term::Projector(basis)
    }

    /// `(min, max)` eigenvalue.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Term::Pauli(p) if p.ops.is_empty() => (1.0, 1.0),
            Term::Pauli(_) => (-1.0, 1.0),
            Term::Projector(_) => (0.0, 1.0),
        }
    }

    fn check_qubits(&self, n_qubits: usize) -> Result<()> {
        let ok = match self {
            Term::Pauli(p) => p.max_qubit().is_none_or(|q| q < n_qubits),
            Term::Projector(b) => b.last().is_none_or(|&i| i < 1 << n_qubits),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Index(format!("{self} does not fit on {n_qubits} qubits")))
        }
    }

    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        self.check_qubits(state.n_qubits())?;
        Ok(self.expectation_unchecked(state))
    }

    pub(crate) fn expectation_unchecked(&self, state: &StateVector) -> f64 {
        match self {
            Term::Projector(basis) => basis.iter().map(|&i| state.amplitudes()[i].norm_sqr()).sum(),
            Term::Pauli(p) if p.is_diagonal() => {
                let mask = p.ops.iter().fold(0usize, |m, &(q, _)| m | state.mask(q));
                state
                    .amplitudes()
                    .iter()
                    .enumerate()
                    .map(|(i, a)| if (i & mask).count_ones() % 2 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                    .sum()
            }
            Term::Pauli(p) => {
                let mut scratch = state.clone();
                for &(q, op) in &p.ops {
                    scratch.apply_pauli(q, op);
                }
                let v: Complex64 = state.inner(&scratch);
                debug_assert!(v.im.abs() < 1e-10, "Hermitian expectation has imaginary part {}", v.im);
                v.re
            }
        }
    }

    /// `H|ψ⟩`, used by adjoint differentiation.
    pub(crate) fn apply_to(&self, state: &StateVector) -> StateVector {
        let mut out = state.clone();
        match self {
            Term::Pauli(p) => {
                for &(q, op) in &p.ops {
                    out.apply_pauli(q, op);
                }
            }
            Term::Projector(basis) => {
                let amps = out.amps_mut();
                let mut keep = vec![false; amps.len()];
                for &i in basis {
                    keep[i] = true;
                }
                for (a, k) in amps.iter_mut().zip(keep) {
                    if !k {
                        *a = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Pauli(p) => write!(f, "{p}"),
            Term::Projector(b) => write!(f, "P{b:?}"),
        }
    }
}

/// `Σ_i w_i H_i` with real weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservableSpec {
    terms: Vec<(f64, Term)>,
}

impl ObservableSpec {
    pub fn new(terms: Vec<(f64, Term)>) -> Self {
        Self { terms }
    }

    pub fn single(term: Term) -> Self {
        Self { terms: vec![(1.0, term)] }
    }

    pub fn terms(&self) -> &[(f64, Term)] {
        &self.terms
    }

    /// Upper bound on the operator norm, `Σ|w_i|·‖H_i‖`.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|(w, _)| w.abs()).sum()
    }

    pub(crate) fn check_qubits(&self, n_qubits: usize) -> Result<()> {
        self.terms.iter().try_for_each(|(_, t)| t.check_qubits(n_qubits))
    }
}

/// Disjoint projectors `P_a` over the computational basis with `Σ_a P_a = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPartition {
    n_qubits: usize,
    action_of: Vec<usize>,
    n_actions: usize,
}

impl ActionPartition {
    /// Every basis index in `0..2^n_qubits` must appear in exactly one set.
    pub fn new(n_qubits: usize, sets: &[Vec<usize>]) -> Result<Self> {
        if n_qubits == 0 || n_qubits > super::MAX_QUBITS {
            return Err(Error::Config(format!("invalid qubit count {n_qubits}")));
        }
        if sets.is_empty() {
            return Err(Error::Config("partition needs at least one action".into()));
        }
        let dim = 1usize << n_qubits;
        let mut action_of = vec![usize::MAX; dim];
        for (a, set) in sets.iter().enumerate() {
            for &i in set {
                if i >= dim {
                    return Err(Error::Index(format!("basis index {i} ≥ {dim}")));
                }
                if action_of[i] != usize::MAX {
                    return Err(Error::Config(format!("basis index {i} assigned to two actions")));
                }
                action_of[i] = a;
            }
        }
        if let Some(i) = action_of.iter().position(|&a| a == usize::MAX) {
            return Err(Error::Config(format!("basis index {i} not covered by any action")));
        }
        Ok(Self { n_qubits, action_of, n_actions: sets.len() })
    }

    /// Action = parity of the full bit string (even → 0).
    pub fn parity(n_qubits: usize, n_actions: usize) -> Result<Self> {
        if n_actions != 2 {
            return Err(Error::Config("parity partition has exactly 2 actions".into()));
        }
        let (even, odd): (Vec<usize>, Vec<usize>) = (0..1usize << n_qubits).partition(|i| i.count_ones() % 2 == 0);
        Self::new(n_qubits, &[even, odd])
    }

    /// Split the basis into `n_actions` contiguous blocks of (nearly) equal size,
    /// i.e. projectors `P_{i..j}`.
    pub fn contiguous(n_qubits: usize, n_actions: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if n_actions == 0 || n_actions > dim {
            return Err(Error::Config(format!("cannot split {dim} basis states into {n_actions} actions")));
        }
        let sets: Vec<Vec<usize>> = (0..n_actions).map(|a| (a * dim / n_actions..(a + 1) * dim / n_actions).collect()).collect();
        Self::new(n_qubits, &sets)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn basis_set(&self, action: usize) -> Vec<usize> {
        (0..self.action_of.len()).filter(|&i| self.action_of[i] == action).collect()
    }

    pub fn projector(&self, action: usize) -> Term {
        Term::Projector(self.basis_set(action))
    }

    /// `(⟨P_a⟩)_a`
    pub fn probabilities(&self, state: &StateVector) -> Result<Vec<f64>> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::Index(format!(
                "partition on {} qubits applied to {}-qubit state",
                self.n_qubits,
                state.n_qubits()
            )));
        }
        let mut p = vec![0.0; self.n_actions];
        for (a, amp) in self.action_of.iter().zip(state.amplitudes()) {
            p[*a] += amp.norm_sqr();
        }
        Ok(p)
    }
}

/// Measure `state` in the computational basis and report the action whose projector
/// contains the outcome.
pub fn born_sample<R: Rng + ?Sized>(state: &StateVector, partition: &ActionPartition, rng: &mut R) -> Result<usize> {
    let probs = partition.probabilities(state)?;
    Ok(sample_categorical(&probs, rng))
}

/// Index drawn with probability proportional to its weight.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding at the top end: last action with nonzero mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

//! Dense statevector simulation.
//!
//! Qubit 0 is the most significant bit of a basis index: on three qubits, `|100⟩` is
//! basis index 4. Projector specifications such as "basis states 0..7" use this order.

mod observable;

pub use observable::{born_sample, sample_categorical, ActionPartition, ObservableSpec, Pauli, PauliString, Term};

use num_complex::Complex64;

use crate::{Error, Result};

pub const MAX_QUBITS: usize = 16;

const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    Ry(usize, f64),
    Rz(usize, f64),
    Cz(usize, usize),
    /// `exp(-i θ/2 Z⊗Z)`
    Rzz(usize, usize, f64),
}

impl Gate {
    pub fn targets(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::H(q) | Gate::Ry(q, _) | Gate::Rz(q, _) => (q, None),
            Gate::Cz(a, b) | Gate::Rzz(a, b, _) => (a, Some(b)),
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Ry(_, t) | Gate::Rz(_, t) | Gate::Rzz(_, _, t) => Some(t),
            Gate::H(_) | Gate::Cz(..) => None,
        }
    }

    /// Same gate with its rotation angle replaced. Non-parametric gates are returned as is.
    pub fn with_angle(&self, angle: f64) -> Gate {
        match *self {
            Gate::Ry(q, _) => Gate::Ry(q, angle),
            Gate::Rz(q, _) => Gate::Rz(q, angle),
            Gate::Rzz(a, b, _) => Gate::Rzz(a, b, angle),
            g => g,
        }
    }

    pub fn inverse(&self) -> Gate {
        match self.angle() {
            Some(t) => self.with_angle(-t),
            None => *self,
        }
    }

    /// Dense `2^k × 2^k` matrix of the gate on its own targets (row-major, first target
    /// is the more significant bit).
    pub fn matrix(&self) -> Vec<Vec<Complex64>> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let z = c(0.0, 0.0);
        match *self {
            Gate::H(_) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]]
            }
            Gate::Ry(_, t) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
            }
            Gate::Rz(_, t) => vec![vec![Complex64::from_polar(1.0, -t / 2.0), z], vec![z, Complex64::from_polar(1.0, t / 2.0)]],
            Gate::Cz(..) => diag4([c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]),
            Gate::Rzz(_, _, t) => {
                let even = Complex64::from_polar(1.0, -t / 2.0);
                let odd = Complex64::from_polar(1.0, t / 2.0);
                diag4([even, odd, odd, even])
            }
        }
    }
}

fn diag4(d: [Complex64; 4]) -> Vec<Vec<Complex64>> {
    (0..4).map(|i| (0..4).map(|j| if i == j { d[i] } else { Complex64::new(0.0, 0.0) }).collect()).collect()
}

/// Amplitudes of an `n`-qubit pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!("n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wrap explicit amplitudes. The vector must have power-of-two length and unit norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            return Err(Error::Config(format!("amplitude length {len} is not 2^n with 1 ≤ n ≤ {MAX_QUBITS}")));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Domain(format!("state norm² {norm} is not 1")));
        }
        Ok(Self { n_qubits: len.trailing_zeros() as usize, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    #[inline]
    pub(crate) fn mask(&self, q: usize) -> usize {
        1 << (self.n_qubits - 1 - q)
    }

    /// Unnormalized vector, used for adjoint (co-)states.
    pub(crate) fn from_raw(n_qubits: usize, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n_qubits);
        Self { n_qubits, amps }
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    fn check_targets(&self, gate: &Gate) -> Result<()> {
        let (a, b) = gate.targets();
        if a >= self.n_qubits || b.is_some_and(|b| b >= self.n_qubits) {
            return Err(Error::Index(format!("{gate:?} targets out of range for {} qubits", self.n_qubits)));
        }
        if b == Some(a) {
            return Err(Error::Index(format!("{gate:?} has repeated target")));
        }
        Ok(())
    }

    /// `U|ψ⟩` as a new state.
    pub fn apply_gate(&self, gate: &Gate) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply(gate)?;
        Ok(out)
    }

    /// In-place `|ψ⟩ ← U|ψ⟩`.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        self.check_targets(gate)?;
        self.apply_unchecked(gate);
        debug_assert!((self.norm_sqr() - 1.0).abs() < 1e-9, "norm drift after {gate:?}");
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        for g in gates {
            self.apply(g)?;
        }
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &Gate) {
        match *gate {
            Gate::H(q) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.for_pairs(q, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = (x + y) * h;
                    *b = (x - y) * h;
                });
            }
            Gate::Ry(q, t) => {
                let (s, c) = (t / 2.0).sin_cos();
                self.for_pairs(q, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = x * c - y * s;
                    *b = x * s + y * c;
                });
            }
            Gate::Rz(q, t) => {
                let p0 = Complex64::from_polar(1.0, -t / 2.0);
                let p1 = p0.conj();
                self.for_pairs(q, |a, b| {
                    *a *= p0;
                    *b *= p1;
                });
            }
            Gate::Cz(q1, q2) => {
                let m = self.mask(q1) | self.mask(q2);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & m == m {
                        *a = -*a;
                    }
                }
            }
            Gate::Rzz(q1, q2, t) => {
                let (m1, m2) = (self.mask(q1), self.mask(q2));
                let even = Complex64::from_polar(1.0, -t / 2.0);
                let odd = even.conj();
                for (i, a) in self.amps.iter_mut().enumerate() {
                    let parity = ((i & m1) != 0) ^ ((i & m2) != 0);
                    *a *= if parity { odd } else { even };
                }
            }
        }
    }

    /// Apply the Hermitian generator `G` of a rotation gate (`U(θ) = exp(-iθG/2)`):
    /// `Y` for Ry, `Z` for Rz, `Z⊗Z` for Rzz.
    pub(crate) fn apply_generator(&mut self, gate: &Gate) {
        match *gate {
            Gate::Ry(q, _) => self.apply_pauli(q, Pauli::Y),
            Gate::Rz(q, _) => self.apply_pauli(q, Pauli::Z),
            Gate::Rzz(a, b, _) => {
                self.apply_pauli(a, Pauli::Z);
                self.apply_pauli(b, Pauli::Z);
            }
            Gate::H(_) | Gate::Cz(..) => unreachable!("{gate:?} has no generator"),
        }
    }

    pub(crate) fn apply_pauli(&mut self, q: usize, p: Pauli) {
        let i_unit = Complex64::new(0.0, 1.0);
        match p {
            Pauli::X => self.for_pairs(q, |a, b| std::mem::swap(a, b)),
            Pauli::Y => self.for_pairs(q, |a, b| {
                let (x, y) = (*a, *b);
                *a = -i_unit * y;
                *b = i_unit * x;
            }),
            Pauli::Z => self.for_pairs(q, |_, b| *b = -*b),
        }
    }

    /// Visit every amplitude pair `(|…0_q…⟩, |…1_q…⟩)`.
    #[inline]
    fn for_pairs(&mut self, q: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let m = self.mask(q);
        for chunk in self.amps.chunks_exact_mut(2 * m) {
            let (lo, hi) = chunk.split_at_mut(m);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a, b);
            }
        }
    }

    /// `Σ_terms w·⟨ψ|H|ψ⟩`.
    pub fn expectation(&self, obs: &ObservableSpec) -> Result<f64> {
        obs.check_qubits(self.n_qubits)?;
        Ok(obs.terms().iter().map(|(w, t)| w * t.expectation_unchecked(self)).sum())
    }
}

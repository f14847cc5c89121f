//! Alternating-layer data re-uploading circuits and the policies built on them.
//!
//! The circuit is a fixed Hadamard prefix followed by
//! `U_var(φ_0) U_enc(s, λ_0) U_var(φ_1) … U_enc(s, λ_{D-1}) U_var(φ_D)`.
//! A variational layer is Rz on every qubit, Ry on every qubit, then the entangler.
//! An encoding layer is Ry on every qubit then Rz on every qubit, one λ per gate.

mod gradient;
mod noise;
mod readout;

pub use gradient::{
    adjoint_vjp, expectation_jacobian, observable_weight_derivative, parameter_shift_derivative, parameter_shift_derivative_with,
    PARAMETER_SHIFT,
};
pub use noise::{noisy_expectation, noisy_term_expectation};
pub use readout::{
    log_policy_gradient, raw_policy, softmax, softmax_log_gradient, softmax_policy, GradientMethod, PolicyConfig, PqcPolicy,
    SoftmaxObservables, WeightedTerm, EPS_DIV,
};

use std::f64::consts::TAU;

use rand::Rng;

use crate::qsim::{Gate, StateVector, MAX_QUBITS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entangler {
    /// Nearest neighbours without wrap-around.
    OneToOne,
    /// Nearest neighbours plus `(n-1, 0)`.
    Circular,
    AllToAll,
}

impl std::str::FromStr for Entangler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-to-one" => Ok(Entangler::OneToOne),
            "circular" => Ok(Entangler::Circular),
            "all-to-all" => Ok(Entangler::AllToAll),
            _ => Err(Error::Config(format!("unknown entangler {s:?}"))),
        }
    }
}

impl std::fmt::Display for Entangler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Entangler::OneToOne => "one-to-one",
            Entangler::Circular => "circular",
            Entangler::AllToAll => "all-to-all",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqcTopology {
    n_qubits: usize,
    d_enc: usize,
    entangler: Entangler,
    entangler_trainable: bool,
    input_dim: usize,
    hadamard_prefix: bool,
}

impl PqcTopology {
    pub fn new(n_qubits: usize, d_enc: usize, entangler: Entangler, entangler_trainable: bool, input_dim: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!("n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}")));
        }
        if d_enc > 0 && input_dim == 0 {
            return Err(Error::Config("encoding layers need input_dim ≥ 1".into()));
        }
        if input_dim > 2 * n_qubits {
            return Err(Error::Config(format!(
                "input_dim {input_dim} exceeds the {} encoding slots of {n_qubits} qubits",
                2 * n_qubits
            )));
        }
        Ok(Self { n_qubits, d_enc, entangler, entangler_trainable, input_dim, hadamard_prefix: true })
    }

    /// Drop the initial Hadamard layer. Only useful for isolating single rotations in tests.
    pub fn without_hadamard_prefix(mut self) -> Self {
        self.hadamard_prefix = false;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn d_enc(&self) -> usize {
        self.d_enc
    }

    pub fn entangler(&self) -> Entangler {
        self.entangler
    }

    pub fn entangler_trainable(&self) -> bool {
        self.entangler_trainable
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn with_d_enc(&self, d_enc: usize) -> Result<Self> {
        let mut t = Self::new(self.n_qubits, d_enc, self.entangler, self.entangler_trainable, self.input_dim)?;
        t.hadamard_prefix = self.hadamard_prefix;
        Ok(t)
    }

    pub fn entangler_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        match self.entangler {
            Entangler::AllToAll => (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect(),
            Entangler::OneToOne | Entangler::Circular => {
                let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).step_by(2).map(|a| (a, a + 1)).collect();
                pairs.extend((1..n.saturating_sub(1)).step_by(2).map(|a| (a, a + 1)));
                if self.entangler == Entangler::Circular && n > 2 {
                    pairs.push((n - 1, 0));
                }
                pairs
            }
        }
    }

    pub fn phi_per_layer(&self) -> usize {
        2 * self.n_qubits + if self.entangler_trainable { self.entangler_pairs().len() } else { 0 }
    }

    pub fn n_phi(&self) -> usize {
        (self.d_enc + 1) * self.phi_per_layer()
    }

    pub fn n_lam(&self) -> usize {
        self.d_enc * 2 * self.n_qubits
    }

    /// Input component read by encoding slot `k` of a layer (Ry slots first, then Rz).
    pub fn slot_input(&self, k: usize) -> usize {
        k % self.input_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Phi,
    Lam,
    W,
}

/// Policy parameters `θ = (φ, λ, w)`. Flat indices run over φ, then λ, then w.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub phi: Vec<f64>,
    pub lam: Vec<f64>,
    pub w: Vec<f64>,
}

impl ParamVector {
    pub fn new(topo: &PqcTopology, n_weights: usize, phi: Vec<f64>, lam: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let want = (topo.n_phi(), topo.n_lam(), n_weights);
        let got = (phi.len(), lam.len(), w.len());
        if want != got {
            return Err(Error::Config(format!("parameter sizes (φ, λ, w) = {got:?}, topology needs {want:?}")));
        }
        Ok(Self { phi, lam, w })
    }

    /// φ ~ U[0, 2π], λ = 1, w = 1.
    pub fn init<R: Rng + ?Sized>(topo: &PqcTopology, n_weights: usize, rng: &mut R) -> Self {
        Self {
            phi: (0..topo.n_phi()).map(|_| rng.random_range(0.0..TAU)).collect(),
            lam: vec![1.0; topo.n_lam()],
            w: vec![1.0; n_weights],
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len() + self.lam.len() + self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn locate(&self, index: usize) -> Result<(ParamGroup, usize)> {
        let (np, nl) = (self.phi.len(), self.lam.len());
        if index < np {
            Ok((ParamGroup::Phi, index))
        } else if index < np + nl {
            Ok((ParamGroup::Lam, index - np))
        } else if index < self.len() {
            Ok((ParamGroup::W, index - np - nl))
        } else {
            Err(Error::Index(format!("parameter index {index} ≥ {}", self.len())))
        }
    }

    pub fn group_range(&self, group: ParamGroup) -> std::ops::Range<usize> {
        let (np, nl) = (self.phi.len(), self.lam.len());
        match group {
            ParamGroup::Phi => 0..np,
            ParamGroup::Lam => np..np + nl,
            ParamGroup::W => np + nl..self.len(),
        }
    }

    pub fn get(&self, index: usize) -> Result<f64> {
        Ok(match self.locate(index)? {
            (ParamGroup::Phi, i) => self.phi[i],
            (ParamGroup::Lam, i) => self.lam[i],
            (ParamGroup::W, i) => self.w[i],
        })
    }

    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        match self.locate(index)? {
            (ParamGroup::Phi, i) => self.phi[i] = value,
            (ParamGroup::Lam, i) => self.lam[i] = value,
            (ParamGroup::W, i) => self.w[i] = value,
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.phi.iter().chain(&self.lam).chain(&self.w).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.lam).chain(&self.w).all(|v| v.is_finite())
    }
}

/// Where a gate's rotation angle comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Fixed,
    Phi(usize),
    /// Angle `λ[index] · input`.
    Lam {
        index: usize,
        input: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub sources: Vec<AngleSource>,
}

impl Circuit {
    pub fn run(&self) -> StateVector {
        let mut psi = StateVector::zero(self.n_qubits).expect("qubit count validated by topology");
        for g in &self.gates {
            psi.apply_unchecked(g);
        }
        psi
    }

    /// Run with gate `at` replaced by its angle plus `shift`.
    pub(crate) fn run_shifted(&self, at: usize, shift: f64) -> StateVector {
        let mut psi = StateVector::zero(self.n_qubits).expect("qubit count validated by topology");
        for (i, g) in self.gates.iter().enumerate() {
            if i == at {
                let t = g.angle().expect("shifted gate is parametric");
                psi.apply_unchecked(&g.with_angle(t + shift));
            } else {
                psi.apply_unchecked(g);
            }
        }
        psi
    }
}

fn check_input(topo: &PqcTopology, s: &[f64]) -> Result<()> {
    if s.len() != topo.input_dim {
        return Err(Error::Config(format!("state has dimension {}, topology expects {}", s.len(), topo.input_dim)));
    }
    Ok(())
}

pub fn build_circuit(topo: &PqcTopology, s: &[f64], phi: &[f64], lam: &[f64]) -> Result<Circuit> {
    check_input(topo, s)?;
    if phi.len() != topo.n_phi() || lam.len() != topo.n_lam() {
        return Err(Error::Config(format!(
            "got |φ| = {}, |λ| = {}; topology needs {} and {}",
            phi.len(),
            lam.len(),
            topo.n_phi(),
            topo.n_lam()
        )));
    }
    let n = topo.n_qubits;
    let pairs = topo.entangler_pairs();
    let mut gates = Vec::new();
    let mut sources = Vec::new();
    let mut push = |g: Gate, src: AngleSource| {
        gates.push(g);
        sources.push(src);
    };
    if topo.hadamard_prefix {
        for q in 0..n {
            push(Gate::H(q), AngleSource::Fixed);
        }
    }
    let mut ip = 0;
    let mut il = 0;
    for layer in 0..=topo.d_enc {
        for q in 0..n {
            push(Gate::Rz(q, phi[ip]), AngleSource::Phi(ip));
            ip += 1;
        }
        for q in 0..n {
            push(Gate::Ry(q, phi[ip]), AngleSource::Phi(ip));
            ip += 1;
        }
        for &(a, b) in &pairs {
            if topo.entangler_trainable {
                push(Gate::Rzz(a, b, phi[ip]), AngleSource::Phi(ip));
                ip += 1;
            } else {
                push(Gate::Cz(a, b), AngleSource::Fixed);
            }
        }
        if layer == topo.d_enc {
            break;
        }
        for k in 0..2 * n {
            let q = k % n;
            let x = s[topo.slot_input(k)];
            let angle = lam[il] * x;
            let g = if k < n { Gate::Ry(q, angle) } else { Gate::Rz(q, angle) };
            push(g, AngleSource::Lam { index: il, input: x });
            il += 1;
        }
    }
    debug_assert_eq!((ip, il), (topo.n_phi(), topo.n_lam()));
    Ok(Circuit { n_qubits: n, gates, sources })
}

/// `|ψ_{s,θ}⟩`
pub fn prepare_state(topo: &PqcTopology, s: &[f64], params: &ParamVector) -> Result<StateVector> {
    Ok(build_circuit(topo, s, &params.phi, &params.lam)?.run())
}

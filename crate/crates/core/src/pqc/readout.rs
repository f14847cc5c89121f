//! Turning a circuit state into an action distribution, and the log-policy gradient.

use rand::Rng;

use super::gradient::{adjoint_vjp, expectation_jacobian};
use super::noise::noisy_term_expectation;
use super::{build_circuit, prepare_state, ParamVector, PqcTopology};
use crate::qsim::{ActionPartition, ObservableSpec, Pauli, PauliString, StateVector, Term};
use crate::{Error, Result};

/// Raw-policy gradients divide by `⟨P_a⟩`; at or below this the gradient is refused.
pub const EPS_DIV: f64 = 1e-12;

/// `coeff · w[weight] · H`
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTerm {
    pub coeff: f64,
    pub weight: usize,
    pub term: Term,
}

/// Per-action observables `O_a = Σ_i c_{a,i} w_{k(a,i)} H_{a,i}` with possibly shared weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxObservables {
    actions: Vec<Vec<WeightedTerm>>,
    n_weights: usize,
    unique: Vec<Term>,
    slot: Vec<Vec<usize>>,
}

impl SoftmaxObservables {
    pub fn new(actions: Vec<Vec<WeightedTerm>>) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::Config("a softmax policy needs at least two actions".into()));
        }
        let n_weights = actions.iter().flatten().map(|t| t.weight + 1).max().unwrap_or(0);
        let mut used = vec![false; n_weights];
        for t in actions.iter().flatten() {
            used[t.weight] = true;
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(Error::Config(format!("weight w{k} is not used by any term")));
        }
        let mut unique: Vec<Term> = Vec::new();
        let slot = actions
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| match unique.iter().position(|u| *u == t.term) {
                        Some(i) => i,
                        None => {
                            unique.push(t.term.clone());
                            unique.len() - 1
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { actions, n_weights, unique, slot })
    }

    /// One string per action. Grammar: terms joined by `+` / `-`, each term
    /// `[coeff*][w<k>*]op` where `op` is `I`, a Pauli product such as `Z0Z1` or `X2`,
    /// a basis projector `P<i>` or a projector onto the basis range `P<i>..<j>` (inclusive).
    /// Terms without an explicit `w<k>` get their own fresh weight.
    pub fn parse<S: AsRef<str>>(specs: &[S]) -> Result<Self> {
        let mut parsed: Vec<Vec<(f64, Option<usize>, Term)>> = Vec::new();
        for spec in specs {
            let chunks = split_signed(spec.as_ref())?;
            parsed.push(chunks.into_iter().map(|(sign, body)| parse_term(sign, body)).collect::<Result<_>>()?);
        }
        let mut next = parsed.iter().flatten().filter_map(|t| t.1).map(|k| k + 1).max().unwrap_or(0);
        let actions = parsed
            .into_iter()
            .map(|terms| {
                terms
                    .into_iter()
                    .map(|(coeff, w, term)| {
                        let weight = w.unwrap_or_else(|| {
                            next += 1;
                            next - 1
                        });
                        WeightedTerm { coeff, weight, term }
                    })
                    .collect()
            })
            .collect();
        Self::new(actions)
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_weights(&self) -> usize {
        self.n_weights
    }

    pub fn actions(&self) -> &[Vec<WeightedTerm>] {
        &self.actions
    }

    /// Distinct Hermitian terms across all actions.
    pub fn unique_terms(&self) -> &[Term] {
        &self.unique
    }

    pub fn action_observable(&self, a: usize, w: &[f64]) -> ObservableSpec {
        ObservableSpec::new(self.actions[a].iter().map(|t| (t.coeff * w[t.weight], t.term.clone())).collect())
    }

    /// `max_a Σ_i |c_{a,i} w_{k(a,i)}|`, an upper bound on `max_a ‖O_a‖`.
    pub fn norm_bound(&self, w: &[f64]) -> f64 {
        (0..self.n_actions()).map(|a| self.action_observable(a, w).norm_bound()).fold(0.0, f64::max)
    }

    /// `⟨O_a⟩` for every action from the unique-term expectations.
    pub fn values(&self, e: &[f64], w: &[f64]) -> Vec<f64> {
        self.actions
            .iter()
            .zip(&self.slot)
            .map(|(terms, slots)| terms.iter().zip(slots).map(|(t, &u)| t.coeff * w[t.weight] * e[u]).sum())
            .collect()
    }

    fn check_qubits(&self, n: usize) -> Result<()> {
        self.unique.iter().try_for_each(|t| ObservableSpec::single(t.clone()).check_qubits(n))
    }
}

fn split_signed(s: &str) -> Result<Vec<(f64, &str)>> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut start = 0;
    let mut pending = false;
    for (i, c) in s.char_indices() {
        if c == '+' || c == '-' {
            let body = s[start..i].trim();
            if !body.is_empty() {
                out.push((sign, body));
            } else if pending {
                return Err(Error::Config(format!("empty term in observable {s:?}")));
            }
            sign = if c == '-' { -1.0 } else { 1.0 };
            start = i + 1;
            pending = true;
        }
    }
    let body = s[start..].trim();
    if body.is_empty() {
        return Err(Error::Config(format!("empty term in observable {s:?}")));
    }
    out.push((sign, body));
    Ok(out)
}

fn parse_term(sign: f64, body: &str) -> Result<(f64, Option<usize>, Term)> {
    let bad = |why: &str| Error::Config(format!("bad observable term {body:?}: {why}"));
    let mut factors: Vec<&str> = body.split('*').map(str::trim).collect();
    let op = factors.pop().ok_or_else(|| bad("empty"))?;
    let mut coeff = sign;
    let mut weight = None;
    for f in factors {
        if let Some(k) = f.strip_prefix('w') {
            if weight.is_some() {
                return Err(bad("more than one weight"));
            }
            weight = Some(k.parse::<usize>().map_err(|_| bad("weight index"))?);
        } else {
            coeff *= f.parse::<f64>().map_err(|_| bad("coefficient"))?;
        }
    }
    let term = if op == "I" {
        Term::Pauli(PauliString::new(vec![])?)
    } else if let Some(range) = op.strip_prefix('P') {
        let (lo, hi) = match range.split_once("..") {
            Some((a, b)) => (a, b),
            None => (range, range),
        };
        let lo: usize = lo.parse().map_err(|_| bad("projector range"))?;
        let hi: usize = hi.parse().map_err(|_| bad("projector range"))?;
        if hi < lo {
            return Err(bad("empty projector range"));
        }
        Term::projector((lo..=hi).collect())
    } else {
        let mut ops = Vec::new();
        let mut chars = op.chars().peekable();
        while let Some(c) = chars.next() {
            let p = match c {
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                _ => return Err(bad("expected X, Y, Z, I or P")),
            };
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            ops.push((p, digits.parse::<usize>().map_err(|_| bad("qubit index"))?));
        }
        Term::Pauli(PauliString::new(ops.into_iter().map(|(p, q)| (q, p)).collect())?)
    };
    Ok((coeff, weight, term))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyConfig {
    /// `π(a|s) = ⟨P_a⟩`
    Raw { partition: ActionPartition },
    /// `π(a|s) ∝ exp(β⟨O_a⟩)`
    Softmax { observables: SoftmaxObservables, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    ParameterShift,
    Adjoint,
    /// Parameter shift on finite-shot expectations.
    Shots(u64),
}

/// Softmax of `beta · values`, shifted by the maximum.
pub fn softmax(values: &[f64], beta: f64) -> Vec<f64> {
    let m = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(beta * v));
    let ex: Vec<f64> = values.iter().map(|&v| (beta * v - m).exp()).collect();
    let z: f64 = ex.iter().sum();
    ex.into_iter().map(|e| e / z).collect()
}

/// `β(∇⟨O_a⟩ − Σ_{a'} π(a') ∇⟨O_{a'}⟩)` from per-action expectation gradients.
pub fn softmax_log_gradient(beta: f64, probs: &[f64], a: usize, grads: &[Vec<f64>]) -> Vec<f64> {
    let mut g = grads[a].clone();
    for (p, ga) in probs.iter().zip(grads) {
        for (gi, x) in g.iter_mut().zip(ga) {
            *gi -= p * x;
        }
    }
    g.iter_mut().for_each(|x| *x *= beta);
    g
}

/// A circuit topology plus a readout rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PqcPolicy {
    topo: PqcTopology,
    config: PolicyConfig,
    terms: Vec<Term>,
}

impl PqcPolicy {
    pub fn new(topo: PqcTopology, config: PolicyConfig) -> Result<Self> {
        let terms = match &config {
            PolicyConfig::Raw { partition } => {
                if partition.n_qubits() != topo.n_qubits() {
                    return Err(Error::Config(format!(
                        "partition is over {} qubits, circuit has {}",
                        partition.n_qubits(),
                        topo.n_qubits()
                    )));
                }
                (0..partition.n_actions()).map(|a| partition.projector(a)).collect()
            }
            PolicyConfig::Softmax { observables, beta } => {
                check_beta(*beta)?;
                observables.check_qubits(topo.n_qubits())?;
                observables.unique_terms().to_vec()
            }
        };
        Ok(Self { topo, config, terms })
    }

    pub fn topology(&self) -> &PqcTopology {
        &self.topo
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        match &self.config {
            PolicyConfig::Raw { partition } => partition.n_actions(),
            PolicyConfig::Softmax { observables, .. } => observables.n_actions(),
        }
    }

    pub fn n_weights(&self) -> usize {
        match &self.config {
            PolicyConfig::Raw { .. } => 0,
            PolicyConfig::Softmax { observables, .. } => observables.n_weights(),
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match &self.config {
            PolicyConfig::Raw { .. } => None,
            PolicyConfig::Softmax { beta, .. } => Some(*beta),
        }
    }

    /// No-op for raw policies.
    pub fn set_beta(&mut self, value: f64) -> Result<()> {
        if let PolicyConfig::Softmax { beta, .. } = &mut self.config {
            check_beta(value)?;
            *beta = value;
        }
        Ok(())
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        ParamVector::init(&self.topo, self.n_weights(), rng)
    }

    fn readout(&self, psi: &StateVector) -> Vec<f64> {
        self.terms.iter().map(|t| t.expectation_unchecked(psi)).collect()
    }

    fn noisy_readout<R: Rng + ?Sized>(&self, psi: &StateVector, shots: u64, rng: &mut R) -> Result<Vec<f64>> {
        self.terms.iter().map(|t| noisy_term_expectation(t, psi, shots, rng)).collect()
    }

    fn probs_from_readout(&self, e: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.config {
            PolicyConfig::Raw { .. } => e.to_vec(),
            PolicyConfig::Softmax { observables, beta } => softmax(&observables.values(e, w), *beta),
        }
    }

    pub fn probabilities(&self, s: &[f64], params: &ParamVector) -> Result<Vec<f64>> {
        let psi = prepare_state(&self.topo, s, params)?;
        Ok(self.probs_from_readout(&self.readout(&psi), &params.w))
    }

    /// Action distribution computed from finite-shot expectation estimates. Raw policies
    /// are returned exactly, since sampling one action is itself a single shot.
    pub fn probabilities_noisy<R: Rng + ?Sized>(
        &self,
        s: &[f64],
        params: &ParamVector,
        shots: u64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let psi = prepare_state(&self.topo, s, params)?;
        match self.config {
            PolicyConfig::Raw { .. } => Ok(self.readout(&psi)),
            PolicyConfig::Softmax { .. } => Ok(self.probs_from_readout(&self.noisy_readout(&psi, shots, rng)?, &params.w)),
        }
    }

    /// `∂ log π(a) / ∂e_t` for the readout terms, and the full `∂ log π(a) / ∂w`.
    fn cotangent(&self, a: usize, e: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if a >= self.n_actions() {
            return Err(Error::Index(format!("action {a} ≥ {}", self.n_actions())));
        }
        match &self.config {
            PolicyConfig::Raw { .. } => {
                if e[a] <= EPS_DIV {
                    return Err(Error::DegenerateProbability { action: a, prob: e[a], floor: EPS_DIV });
                }
                let mut c = vec![0.0; e.len()];
                c[a] = 1.0 / e[a];
                Ok((c, vec![]))
            }
            PolicyConfig::Softmax { observables, beta } => {
                let probs = softmax(&observables.values(e, w), *beta);
                let mut c = vec![0.0; e.len()];
                let mut gw = vec![0.0; w.len()];
                for (b, (terms, slots)) in observables.actions.iter().zip(&observables.slot).enumerate() {
                    let dob = beta * (f64::from(u8::from(b == a)) - probs[b]);
                    for (t, &u) in terms.iter().zip(slots) {
                        c[u] += dob * t.coeff * w[t.weight];
                        gw[t.weight] += dob * t.coeff * e[u];
                    }
                }
                Ok((c, gw))
            }
        }
    }

    /// `∇_θ log π(a|s)` over (φ, λ, w), exact.
    pub fn log_policy_gradient(&self, s: &[f64], a: usize, params: &ParamVector, method: GradientMethod) -> Result<Vec<f64>> {
        let circuit = build_circuit(&self.topo, s, &params.phi, &params.lam)?;
        let psi = circuit.run();
        let e = self.readout(&psi);
        let (c, gw) = self.cotangent(a, &e, &params.w)?;
        let (np, nl) = (self.topo.n_phi(), self.topo.n_lam());
        let mut g = match method {
            GradientMethod::Adjoint => {
                let weighted: Vec<(f64, &Term)> = c.iter().copied().zip(&self.terms).collect();
                adjoint_vjp(&circuit, &weighted, np, nl)
            }
            GradientMethod::ParameterShift => {
                let jac = expectation_jacobian(&circuit, &self.terms, np, nl);
                vjp(&c, &jac, np + nl)
            }
            GradientMethod::Shots(_) => {
                return Err(Error::Config("shot-noise gradients need a random source".into()));
            }
        };
        g.extend(gw);
        Ok(g)
    }

    /// `∇_θ log π(a|s)` with every expectation (including the shifted ones) estimated from
    /// `shots` measurements.
    pub fn log_policy_gradient_noisy<R: Rng + ?Sized>(
        &self,
        s: &[f64],
        a: usize,
        params: &ParamVector,
        shots: u64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let circuit = build_circuit(&self.topo, s, &params.phi, &params.lam)?;
        let e = self.noisy_readout(&circuit.run(), shots, rng)?;
        let (c, gw) = self.cotangent(a, &e, &params.w)?;
        let (np, nl) = (self.topo.n_phi(), self.topo.n_lam());
        let mut jac = vec![vec![0.0; np + nl]; self.terms.len()];
        for (at, src) in circuit.sources.iter().enumerate() {
            let (col, factor) = match *src {
                super::AngleSource::Fixed => continue,
                super::AngleSource::Phi(i) => (i, 1.0),
                super::AngleSource::Lam { index, input } => (np + index, input),
            };
            let plus = self.noisy_readout(&circuit.run_shifted(at, super::PARAMETER_SHIFT), shots, rng)?;
            let minus = self.noisy_readout(&circuit.run_shifted(at, -super::PARAMETER_SHIFT), shots, rng)?;
            for (t, row) in jac.iter_mut().enumerate() {
                row[col] += factor * (plus[t] - minus[t]) / 2.0;
            }
        }
        let mut g = vjp(&c, &jac, np + nl);
        g.extend(gw);
        Ok(g)
    }
}

fn vjp(c: &[f64], jac: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for (ct, row) in c.iter().zip(jac) {
        if *ct != 0.0 {
            for (gi, j) in g.iter_mut().zip(row) {
                *gi += ct * j;
            }
        }
    }
    g
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("β must be positive and finite, got {beta}")))
    }
}

/// `(⟨P_a⟩_{s,θ})_a`
pub fn raw_policy(s: &[f64], params: &ParamVector, topo: &PqcTopology, partition: &ActionPartition) -> Result<Vec<f64>> {
    PqcPolicy::new(topo.clone(), PolicyConfig::Raw { partition: partition.clone() })?.probabilities(s, params)
}

/// `softmax(β⟨O_a⟩_{s,θ})`
pub fn softmax_policy(
    s: &[f64],
    params: &ParamVector,
    topo: &PqcTopology,
    observables: &SoftmaxObservables,
    beta: f64,
) -> Result<Vec<f64>> {
    PqcPolicy::new(topo.clone(), PolicyConfig::Softmax { observables: observables.clone(), beta })?.probabilities(s, params)
}

/// Exact `∇_θ log π(a|s)` by the parameter-shift rule.
pub fn log_policy_gradient(
    s: &[f64],
    a: usize,
    params: &ParamVector,
    topo: &PqcTopology,
    config: &PolicyConfig,
) -> Result<Vec<f64>> {
    PqcPolicy::new(topo.clone(), config.clone())?.log_policy_gradient(s, a, params, GradientMethod::ParameterShift)
}

#[cfg(test)]
mod tests {
    use super::super::Entangler;
    use super::*;
    use crate::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn zz_pair() -> SoftmaxObservables {
        SoftmaxObservables::parse(&["Z0Z1", "-Z0Z1"]).unwrap()
    }

    #[test]
    fn parser_grammar() {
        let o = SoftmaxObservables::parse(&["w0*Z0Z1Z2Z3", "-w0*Z0Z1Z2Z3"]).unwrap();
        assert_eq!(o.n_weights(), 1);
        assert_eq!(o.unique_terms().len(), 1);
        assert_eq!(o.actions()[1][0].coeff, -1.0);

        let o = SoftmaxObservables::parse(&["0.5*Z0 + X1Y0", "P0..3 - 2*w0*P5", "I"]).unwrap();
        assert_eq!(o.n_weights(), 5);
        assert_eq!(o.actions()[0][0].weight, 1);
        assert_eq!(o.actions()[1][1].coeff, -2.0);
        assert_eq!(o.actions()[1][1].weight, 0);
        assert_eq!(o.actions()[1][0].term, Term::projector(vec![0, 1, 2, 3]));
        assert_eq!(o.actions()[0][1].term, Term::Pauli(PauliString::new(vec![(0, Pauli::Y), (1, Pauli::X)]).unwrap()));

        for bad in [&["Z0", "Q1"][..], &["Z0"], &["Z0Z0", "Z1"], &["w1*Z0", "Z1"], &["Z0 + ", "Z1"], &["P3..1", "Z0"]] {
            assert!(SoftmaxObservables::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn raw_uniform_at_depth_zero() {
        let t = PqcTopology::new(2, 0, Entangler::OneToOne, false, 0).unwrap();
        let p = ParamVector::new(&t, 0, vec![0.0; 4], vec![], vec![]).unwrap();
        let first_qubit = ActionPartition::new(2, &[vec![0, 1], vec![2, 3]]).unwrap();
        let probs = raw_policy(&[], &p, &t, &first_qubit).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12 && (probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn raw_single_rotation() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap().without_hadamard_prefix();
        let part = ActionPartition::new(1, &[vec![0], vec![1]]).unwrap();
        for theta in [0.0, 0.5, 2.0, 4.0] {
            let p = ParamVector::new(&t, 0, vec![1.3, theta], vec![], vec![]).unwrap();
            let probs = raw_policy(&[], &p, &t, &part).unwrap();
            assert!((probs[0] - (theta / 2.0).cos().powi(2)).abs() < 1e-12);
            assert!((probs[1] - (theta / 2.0).sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_sums_to_one() {
        let mut rng = rng_from_seed(0);
        for _ in 0..50 {
            let t = PqcTopology::new(3, 2, Entangler::AllToAll, true, 3).unwrap();
            let p = ParamVector::init(&t, 0, &mut rng);
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let part = ActionPartition::contiguous(3, 3).unwrap();
            let probs = raw_policy(&s, &p, &t, &part).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(probs.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn softmax_examples() {
        let t = PqcTopology::new(2, 1, Entangler::OneToOne, false, 2).unwrap();
        let mut rng = rng_from_seed(0);
        let p = ParamVector::init(&t, 2, &mut rng);
        let s = [0.4, -1.2];

        let same = SoftmaxObservables::parse(&["Z0", "Z0", "Z0"]).unwrap();
        let probs = softmax_policy(&s, &ParamVector { w: vec![1.0; 3], ..p.clone() }, &t, &same, 2.0).unwrap();
        assert!(probs.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));

        let probs = softmax_policy(&s, &p, &t, &zz_pair(), 1e-12).unwrap();
        assert!(probs.iter().all(|x| (x - 0.5).abs() < 1e-10));

        let zz = ObservableSpec::single(Term::Pauli(PauliString::zs(&[0, 1]).unwrap()));
        let v = prepare_state(&t, &s, &p).unwrap().expectation(&zz).unwrap();
        for beta in [0.5, 1.0, 3.0] {
            let probs = softmax_policy(&s, &p, &t, &zz_pair(), beta).unwrap();
            let logistic = 1.0 / (1.0 + (-2.0 * beta * v).exp());
            assert!((probs[0] - logistic).abs() < 1e-12);
            assert!((probs[1] - (1.0 - logistic)).abs() < 1e-12);
        }
        assert!(matches!(softmax_policy(&s, &p, &t, &zz_pair(), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let p = softmax(&[1e4, 1e4 - 1.0, -1e4], 10.0);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_observables_give_zero_gradient() {
        let t = PqcTopology::new(2, 2, Entangler::OneToOne, false, 2).unwrap();
        let obs = SoftmaxObservables::parse(&["w0*Z0Z1", "w0*Z0Z1"]).unwrap();
        let cfg = PolicyConfig::Softmax { observables: obs, beta: 1.5 };
        let mut rng = rng_from_seed(1);
        let p = ParamVector::init(&t, 1, &mut rng);
        let g = log_policy_gradient(&[0.1, 0.2], 0, &p, &t, &cfg).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn raw_gradient_refuses_zero_probability() {
        let t = PqcTopology::new(1, 0, Entangler::OneToOne, false, 0).unwrap().without_hadamard_prefix();
        let part = ActionPartition::new(1, &[vec![0], vec![1]]).unwrap();
        let p = ParamVector::new(&t, 0, vec![0.0, 0.0], vec![], vec![]).unwrap();
        let cfg = PolicyConfig::Raw { partition: part };
        assert!(matches!(log_policy_gradient(&[], 1, &p, &t, &cfg), Err(Error::DegenerateProbability { action: 1, .. })));
        assert!(log_policy_gradient(&[], 0, &p, &t, &cfg).is_ok());
    }

    pub(crate) fn random_policy(rng: &mut crate::SimRng, raw: bool) -> (PqcPolicy, ParamVector, Vec<f64>) {
        let n = rng.random_range(2..=4);
        let d = rng.random_range(0..=4);
        let ent = [Entangler::OneToOne, Entangler::Circular, Entangler::AllToAll][rng.random_range(0..3)];
        let input_dim = rng.random_range(1..=2 * n);
        let t = PqcTopology::new(n, d, ent, rng.random::<bool>(), input_dim).unwrap();
        let n_actions = rng.random_range(2..=4);
        let config = if raw {
            PolicyConfig::Raw { partition: ActionPartition::contiguous(n, n_actions).unwrap() }
        } else {
            let specs: Vec<String> = (0..n_actions)
                .map(|a| match a {
                    0 => "w0*Z0Z1".to_string(),
                    1 => format!("-w0*Z0Z1 + 0.5*X{}", n - 1),
                    2 => "Y0 - P0..1".to_string(),
                    _ => "Z1".to_string(),
                })
                .collect();
            PolicyConfig::Softmax { observables: SoftmaxObservables::parse(&specs).unwrap(), beta: rng.random_range(0.5..3.0) }
        };
        let policy = PqcPolicy::new(t, config).unwrap();
        let mut params = policy.init_params(rng);
        for w in &mut params.w {
            *w = rng.random_range(-2.0..2.0);
        }
        for l in &mut params.lam {
            *l = rng.random_range(-1.5..1.5);
        }
        let s = (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        (policy, params, s)
    }

    #[test]
    fn score_identity() {
        let mut rng = rng_from_seed(2);
        for raw in [false, true] {
            let mut checked = 0;
            while checked < 100 {
                let (policy, params, s) = random_policy(&mut rng, raw);
                let probs = policy.probabilities(&s, &params).unwrap();
                if raw && probs.iter().any(|&p| p <= 1e-6) {
                    continue;
                }
                let mut total = vec![0.0; params.len()];
                for (a, pa) in probs.iter().enumerate() {
                    let g = policy.log_policy_gradient(&s, a, &params, GradientMethod::ParameterShift).unwrap();
                    for (t, x) in total.iter_mut().zip(g) {
                        *t += pa * x;
                    }
                }
                let linf = total.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(linf < 1e-8, "raw={raw} ‖Σπ∇logπ‖∞ = {linf}");
                checked += 1;
            }
        }
    }

    #[test]
    fn log_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(0);
        for raw in [false, true] {
            let (policy, params, s) = random_policy(&mut rng, raw);
            let a = 0;
            let g = policy.log_policy_gradient(&s, a, &params, GradientMethod::ParameterShift).unwrap();
            let h = 1e-5;
            for (j, gj) in g.iter().enumerate() {
                let mut up = params.clone();
                up.set(j, params.get(j).unwrap() + h).unwrap();
                let mut down = params.clone();
                down.set(j, params.get(j).unwrap() - h).unwrap();
                let fd = (policy.probabilities(&s, &up).unwrap()[a].ln() - policy.probabilities(&s, &down).unwrap()[a].ln())
                    / (2.0 * h);
                assert!((gj - fd).abs() <= 1e-5 * fd.abs().max(1e-4), "raw={raw} j={j}: {gj} vs {fd}");
            }
        }
    }

    #[test]
    fn adjoint_and_parameter_shift_agree() {
        let mut rng = rng_from_seed(3);
        for i in 0..60 {
            let (policy, params, s) = random_policy(&mut rng, i % 2 == 0);
            let a = rng.random_range(0..policy.n_actions());
            let ps = policy.log_policy_gradient(&s, a, &params, GradientMethod::ParameterShift);
            let adj = policy.log_policy_gradient(&s, a, &params, GradientMethod::Adjoint);
            match (ps, adj) {
                (Ok(x), Ok(y)) => {
                    for (u, v) in x.iter().zip(&y) {
                        assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
                    }
                }
                (Err(e1), Err(e2)) => assert_eq!(e1, e2),
                (x, y) => panic!("methods disagree: {x:?} vs {y:?}"),
            }
        }
    }

    #[test]
    fn noisy_gradient_converges_to_exact() {
        let mut rng = rng_from_seed(4);
        let (policy, params, s) = random_policy(&mut rng, false);
        let exact = policy.log_policy_gradient(&s, 1, &params, GradientMethod::Adjoint).unwrap();
        let noisy = policy.log_policy_gradient_noisy(&s, 1, &params, 1 << 22, &mut rng).unwrap();
        let worst = exact.iter().zip(&noisy).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn lemma_one_helper_matches_policy_gradient() {
        // rebuild the softmax gradient from per-action expectation gradients
        let mut rng = rng_from_seed(5);
        let (policy, params, s) = random_policy(&mut rng, false);
        let PolicyConfig::Softmax { observables, beta } = policy.config().clone() else { unreachable!() };
        let t = policy.topology();
        let probs = policy.probabilities(&s, &params).unwrap();
        let grads: Vec<Vec<f64>> = (0..observables.n_actions())
            .map(|a| {
                let obs = observables.action_observable(a, &params.w);
                let mut g: Vec<f64> = (0..t.n_phi() + t.n_lam())
                    .map(|j| super::super::parameter_shift_derivative(&s, &params, t, &obs, j).unwrap())
                    .collect();
                let mut gw = vec![0.0; params.w.len()];
                for wt in &observables.actions()[a] {
                    gw[wt.weight] += wt.coeff * super::super::observable_weight_derivative(&s, &params, t, &wt.term).unwrap();
                }
                g.extend(gw);
                g
            })
            .collect();
        for a in 0..observables.n_actions() {
            let via_helper = softmax_log_gradient(beta, &probs, a, &grads);
            let direct = policy.log_policy_gradient(&s, a, &params, GradientMethod::Adjoint).unwrap();
            for (x, y) in via_helper.iter().zip(&direct) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    fn total_variation(p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
    }

    #[test]
    fn perturbed_expectations_bound_total_variation() {
        let mut rng = rng_from_seed(6);
        for &eps in &[1e-3f64, 1e-2] {
            for &beta in &[1.0f64, 5.0] {
                let bound = 2.0 * (2.0 * beta * eps).sinh();
                for _ in 0..1000 {
                    let base: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let pi = softmax(&base, beta);
                    for mask in 0..8u32 {
                        let pert: Vec<f64> =
                            base.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { v + eps } else { v - eps }).collect();
                        assert!(total_variation(&softmax(&pert, beta), &pi) <= bound);
                    }
                }
            }
        }
    }

    #[test]
    fn perturbed_gradients_stay_close() {
        let mut rng = rng_from_seed(7);
        for &eps in &[1e-4, 1e-3] {
            for &beta in &[1.0f64, 5.0] {
                for _ in 0..20 {
                    let (policy, mut params, s) = random_policy(&mut rng, false);
                    // keep every weight magnitude ≥ 1 so |∂⟨O⟩/∂w| ≤ ‖O‖
                    for w in &mut params.w {
                        *w = w.signum() * (1.0 + w.abs());
                    }
                    let PolicyConfig::Softmax { observables, .. } = policy.config().clone() else { unreachable!() };
                    let t = policy.topology();
                    let n_a = observables.n_actions();
                    let psi = prepare_state(t, &s, &params).unwrap();
                    let values: Vec<f64> =
                        (0..n_a).map(|a| psi.expectation(&observables.action_observable(a, &params.w)).unwrap()).collect();
                    let grads: Vec<Vec<f64>> = (0..n_a)
                        .map(|a| {
                            let obs = observables.action_observable(a, &params.w);
                            (0..t.n_phi() + t.n_lam())
                                .map(|j| super::super::parameter_shift_derivative(&s, &params, t, &obs, j).unwrap())
                                .collect()
                        })
                        .collect();
                    let eps_prime = eps / (4.0 * beta * observables.norm_bound(&params.w));
                    let pi = softmax(&values, beta);
                    let noisy_values: Vec<f64> =
                        values.iter().map(|v| v + eps_prime * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                    let noisy_grads: Vec<Vec<f64>> = grads
                        .iter()
                        .map(|g| g.iter().map(|x| x + eps * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
                        .collect();
                    let pi_noisy = softmax(&noisy_values, beta);
                    for a in 0..n_a {
                        let exact = softmax_log_gradient(beta, &pi, a, &grads);
                        let approx = softmax_log_gradient(beta, &pi_noisy, a, &noisy_grads);
                        let linf = exact.iter().zip(&approx).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                        assert!(linf <= 3.0 * beta * eps + 1e-6, "linf {linf}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_preserves_argmax(values in proptest::collection::vec(-5.0f64..5.0, 2..6), beta in 1e-3f64..50.0) {
            let p = softmax(&values, beta);
            let arg = |xs: &[f64]| xs.iter().enumerate().fold(0, |b, (i, x)| if *x > xs[b] { i } else { b });
            let top = arg(&values);
            // ties in the inputs stay ties in the output
            prop_assert!(p.iter().all(|x| *x <= p[top] + 1e-15));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

//! Supervised and cliffwalk tasks labelled by a frozen random 2-qubit circuit.

use std::f64::consts::TAU;

use rand::Rng;

use super::{action_to_label, Clock, Environment, StepResult};
use crate::pqc::{prepare_state, Entangler, ParamVector, PqcTopology};
use crate::qsim::{PauliString, Term};
use crate::{rng_from_seed, Error, Result, SimRng};

pub const GENERATOR_QUBITS: usize = 2;
pub const GENERATOR_DEPTH: usize = 4;
pub const MARGIN: f64 = 0.3;
pub const POINTS_PER_LABEL: usize = 10;
pub const EPISODE_LEN: usize = 20;
pub const MAX_DRAWS: usize = 1_000_000;
const MAX_GENERATORS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PqcEnvSpec {
    pub topology: PqcTopology,
    pub params: ParamVector,
    pub margin: f64,
    /// Points in acceptance order with their labels.
    pub dataset: Vec<([f64; 2], i8)>,
    pub episode_len: usize,
}

impl PqcEnvSpec {
    /// `⟨Z0 Z1⟩` of the generator at input `s`.
    pub fn zz(&self, s: [f64; 2]) -> Result<f64> {
        generator_zz(&self.topology, &self.params, s)
    }

    pub fn label(&self, s: [f64; 2]) -> Result<i8> {
        Ok(if self.zz(s)? >= 0.0 { 1 } else { -1 })
    }
}

fn generator_zz(topo: &PqcTopology, params: &ParamVector, s: [f64; 2]) -> Result<f64> {
    let psi = prepare_state(topo, &s, params)?;
    Term::Pauli(PauliString::zs(&[0, 1])?).expectation(&psi)
}

pub fn generator_topology() -> PqcTopology {
    PqcTopology::new(GENERATOR_QUBITS, GENERATOR_DEPTH, Entangler::OneToOne, false, 2).expect("fixed generator topology")
}

/// One generator draw followed by rejection sampling of the dataset. Fails with
/// `DegenerateGenerator` if more than `max_draws` points are needed.
pub fn generate_pqc_env_with(rng: &mut SimRng, max_draws: usize) -> Result<PqcEnvSpec> {
    let topology = generator_topology();
    let params = ParamVector::init(&topology, 0, rng);
    let half = MARGIN / 2.0;
    let mut dataset = Vec::with_capacity(2 * POINTS_PER_LABEL);
    let (mut pos, mut neg) = (0, 0);
    let mut draws = 0;
    while pos < POINTS_PER_LABEL || neg < POINTS_PER_LABEL {
        if draws >= max_draws {
            return Err(Error::DegenerateGenerator(format!("{pos}+/{neg}- accepted after {draws} draws")));
        }
        draws += 1;
        let s = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        let zz = generator_zz(&topology, &params, s)?;
        if zz.abs() < half {
            continue;
        }
        let label = if zz >= 0.0 { 1 } else { -1 };
        let count = if label == 1 { &mut pos } else { &mut neg };
        if *count < POINTS_PER_LABEL {
            *count += 1;
            dataset.push((s, label));
        }
    }
    Ok(PqcEnvSpec { topology, params, margin: MARGIN, dataset, episode_len: EPISODE_LEN })
}

/// Deterministic in `seed`; redraws the generator when one is degenerate.
pub fn generate_pqc_env(seed: u64) -> Result<PqcEnvSpec> {
    let mut rng = rng_from_seed(seed);
    let mut last = None;
    for _ in 0..MAX_GENERATORS {
        match generate_pqc_env_with(&mut rng, MAX_DRAWS) {
            Err(e @ Error::DegenerateGenerator(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Each step shows a uniformly drawn dataset point; reward `+1` for the right label, `-1` otherwise.
#[derive(Debug, Clone)]
pub struct SlPqc {
    spec: PqcEnvSpec,
    current: usize,
    clock: Clock,
}

impl SlPqc {
    pub fn new(spec: PqcEnvSpec) -> Self {
        Self { spec, current: 0, clock: Clock::default() }
    }

    pub fn spec(&self) -> &PqcEnvSpec {
        &self.spec
    }

    /// Label of the point currently shown.
    pub fn current_label(&self) -> i8 {
        self.spec.dataset[self.current].1
    }

    fn draw(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.current = rng.random_range(0..self.spec.dataset.len());
        self.spec.dataset[self.current].0.to_vec()
    }
}

impl Environment for SlPqc {
    fn name(&self) -> &'static str {
        "sl-pqc"
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.spec.episode_len
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.clock.start();
        self.draw(rng)
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 2)?;
        let reward = if action_to_label(action) == self.current_label() { 1.0 } else { -1.0 };
        let done = self.clock.tick(false, self.spec.episode_len);
        Ok(StepResult { observation: self.draw(rng), reward, done })
    }
}

/// Walks the dataset in order from its first point. A right label earns `+1` and moves on;
/// a wrong one earns `-1` and ends the episode.
#[derive(Debug, Clone)]
pub struct CliffwalkPqc {
    spec: PqcEnvSpec,
    position: usize,
    clock: Clock,
}

impl CliffwalkPqc {
    pub fn new(spec: PqcEnvSpec) -> Self {
        Self { spec, position: 0, clock: Clock::default() }
    }

    pub fn spec(&self) -> &PqcEnvSpec {
        &self.spec
    }

    pub fn current_label(&self) -> i8 {
        self.spec.dataset[self.position].1
    }

    fn observe(&self) -> Vec<f64> {
        self.spec.dataset[self.position].0.to_vec()
    }
}

impl Environment for CliffwalkPqc {
    fn name(&self) -> &'static str {
        "cliffwalk-pqc"
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.spec.episode_len
    }

    fn reset(&mut self, _rng: &mut SimRng) -> Vec<f64> {
        self.clock.start();
        self.position = 0;
        self.observe()
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 2)?;
        let correct = action_to_label(action) == self.current_label();
        if correct {
            self.position = (self.position + 1) % self.spec.dataset.len();
        }
        let done = self.clock.tick(!correct, self.spec.episode_len);
        Ok(StepResult { observation: self.observe(), reward: if correct { 1.0 } else { -1.0 }, done })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{label_to_action, test_util::rollout};
    use super::*;
    use crate::qsim::StateVector;

    fn spec() -> PqcEnvSpec {
        generate_pqc_env(0).unwrap()
    }

    #[test]
    fn dataset_margin_and_balance() {
        for seed in 0..5 {
            let spec = generate_pqc_env(seed).unwrap();
            assert_eq!(spec.dataset.len(), 20);
            assert_eq!(spec.dataset.iter().filter(|(_, l)| *l == 1).count(), 10);
            for &(s, l) in &spec.dataset {
                let zz = spec.zz(s).unwrap();
                assert!(zz.abs() >= 0.15);
                assert_eq!(l, if zz >= 0.0 { 1 } else { -1 });
                assert!(s.iter().all(|v| (0.0..TAU).contains(v)));
            }
        }
    }

    #[test]
    fn zz_matches_dense_statevector() {
        let spec = spec();
        let s = spec.dataset[3].0;
        let psi: StateVector = prepare_state(&spec.topology, &s, &spec.params).unwrap();
        let p = psi.probabilities();
        // qubit 0 is the high bit: indices 0 and 3 have even parity
        let want = p[0] - p[1] - p[2] + p[3];
        assert!((spec.zz(s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_pqc_env(7).unwrap();
        let b = generate_pqc_env(7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.dataset, generate_pqc_env(8).unwrap().dataset);
    }

    #[test]
    fn draw_budget_exhaustion() {
        let mut rng = rng_from_seed(0);
        let r = generate_pqc_env_with(&mut rng, 5);
        assert!(matches!(r, Err(Error::DegenerateGenerator(_))));
    }

    #[test]
    fn sl_pqc_rewards_and_length() {
        let mut env = SlPqc::new(spec());
        let mut rng = rng_from_seed(3);
        env.reset(&mut rng);
        let mut steps = 0;
        loop {
            let label = env.current_label();
            let r = env.step(label_to_action(label), &mut rng).unwrap();
            assert_eq!(r.reward, 1.0);
            steps += 1;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 20);
        env.reset(&mut rng);
        let label = env.current_label();
        assert_eq!(env.step(label_to_action(-label), &mut rng).unwrap().reward, -1.0);
        let (steps, _) = rollout(&mut env, 0, |_| 0);
        assert_eq!(steps, 20);
    }

    #[test]
    fn cliffwalk_pqc_oracle_and_failure() {
        let spec = spec();
        let mut env = CliffwalkPqc::new(spec.clone());
        let mut rng = rng_from_seed(0);
        let first = env.reset(&mut rng);
        assert_eq!(first, spec.dataset[0].0.to_vec());
        let mut total = 0.0;
        for i in 0..20 {
            let r = env.step(label_to_action(env.current_label()), &mut rng).unwrap();
            total += r.reward;
            assert_eq!(r.done, i == 19);
        }
        assert_eq!(total, 20.0);

        env.reset(&mut rng);
        env.step(label_to_action(env.current_label()), &mut rng).unwrap();
        let r = env.step(label_to_action(-env.current_label()), &mut rng).unwrap();
        assert_eq!((r.reward, r.done), (-1.0, true));
    }
}

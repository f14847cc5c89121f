//! Tasks built on the discrete-log concept class. States are elements `x ∈ Z_p^*`
//! presented as the raw integer.

use rand::Rng;

use super::{action_to_label, Clock, Environment, StepResult};
use crate::dlp::{label, DlpInstance};
use crate::{Error, Result, SimRng};

fn uniform_element(instance: &DlpInstance, rng: &mut SimRng) -> u64 {
    rng.random_range(1..instance.p())
}

/// Uniformly drawn `x` each step; `+1` for the right label, `-1` otherwise.
#[derive(Debug, Clone)]
pub struct SlDlp {
    instance: DlpInstance,
    episode_len: usize,
    x: u64,
    clock: Clock,
}

impl SlDlp {
    pub fn new(instance: DlpInstance, episode_len: usize) -> Result<Self> {
        if episode_len == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        Ok(Self { instance, episode_len, x: 1, clock: Clock::default() })
    }

    pub fn instance(&self) -> &DlpInstance {
        &self.instance
    }

    pub fn current(&self) -> u64 {
        self.x
    }
}

impl Environment for SlDlp {
    fn name(&self) -> &'static str {
        "sl-dlp"
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.clock.start();
        self.x = uniform_element(&self.instance, rng);
        vec![self.x as f64]
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 2)?;
        let correct = action_to_label(action) == label(&self.instance, self.x)?;
        self.x = uniform_element(&self.instance, rng);
        let done = self.clock.tick(false, self.episode_len);
        Ok(StepResult { observation: vec![self.x as f64], reward: if correct { 1.0 } else { -1.0 }, done })
    }
}

/// Cyclic cliff over `1, 2, …, p-1, 1, …`. A right label earns 0 and moves to the next
/// element, or with probability `slip` to a uniformly random one. A wrong label earns `-1`
/// and ends the episode.
#[derive(Debug, Clone)]
pub struct CliffwalkDlp {
    instance: DlpInstance,
    slip: f64,
    max_steps: usize,
    x: u64,
    clock: Clock,
}

impl CliffwalkDlp {
    pub const DEFAULT_MAX_STEPS: usize = 1000;

    pub fn new(instance: DlpInstance, slip: f64, max_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&slip) {
            return Err(Error::Config(format!("slip probability {slip} ∉ [0, 1]")));
        }
        if max_steps == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        Ok(Self { instance, slip, max_steps, x: 1, clock: Clock::default() })
    }

    pub fn instance(&self) -> &DlpInstance {
        &self.instance
    }

    pub fn current(&self) -> u64 {
        self.x
    }

    /// Start an episode at a chosen element.
    pub fn reset_to(&mut self, x: u64) -> Result<Vec<f64>> {
        if !self.instance.contains(x) {
            return Err(Error::Domain(format!("{x} ∉ Z_{}^*", self.instance.p())));
        }
        self.x = x;
        self.clock.start();
        Ok(vec![x as f64])
    }
}

impl Environment for CliffwalkDlp {
    fn name(&self) -> &'static str {
        "cliffwalk-dlp"
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let x = uniform_element(&self.instance, rng);
        self.reset_to(x).expect("element in range")
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 2)?;
        let correct = action_to_label(action) == label(&self.instance, self.x)?;
        if correct {
            self.x = if self.slip > 0.0 && rng.random_bool(self.slip) {
                uniform_element(&self.instance, rng)
            } else if self.x == self.instance.p() - 1 {
                1
            } else {
                self.x + 1
            };
        }
        let done = self.clock.tick(!correct, self.max_steps);
        Ok(StepResult { observation: vec![self.x as f64], reward: if correct { 0.0 } else { -1.0 }, done })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChainPos {
    Train(usize),
    Test,
    Limbo,
}

/// A chain of `k` labelled examples `[x_i, f(x_i)]` followed by one unlabelled test element
/// `[x, 0]`. Episodes last `k + 1` steps and only the test answer matters: right earns 1 and
/// returns to the chain start, wrong falls into a zero-reward limbo `[0, 0]` that is never
/// left, even across resets.
#[derive(Debug, Clone)]
pub struct DeterministicDlp {
    instance: DlpInstance,
    training: Vec<(u64, i8)>,
    test: u64,
    pos: ChainPos,
    clock: Clock,
}

impl DeterministicDlp {
    pub const MAX_DEFAULT_CHAIN: usize = 64;

    pub fn default_chain_len(instance: &DlpInstance) -> usize {
        (instance.order() as usize).min(Self::MAX_DEFAULT_CHAIN)
    }

    /// Draws `k` distinct training elements and a test element, distinct from them when
    /// `k < p - 1`.
    pub fn new(instance: DlpInstance, k: usize, rng: &mut SimRng) -> Result<Self> {
        let order = instance.order() as usize;
        if k > order {
            return Err(Error::Config(format!("chain length {k} exceeds |Z_p^*| = {order}")));
        }
        let picks = rand::seq::index::sample(rng, order, (k + 1).min(order));
        let elems: Vec<u64> = picks.iter().map(|i| i as u64 + 1).collect();
        let training = elems[..k].iter().map(|&x| Ok((x, label(&instance, x)?))).collect::<Result<Vec<_>>>()?;
        let test = if k < order { elems[k] } else { uniform_element(&instance, rng) };
        Ok(Self { instance, training, test, pos: ChainPos::Train(0), clock: Clock::default() })
    }

    pub fn instance(&self) -> &DlpInstance {
        &self.instance
    }

    pub fn training_set(&self) -> &[(u64, i8)] {
        &self.training
    }

    pub fn test_element(&self) -> u64 {
        self.test
    }

    pub fn in_limbo(&self) -> bool {
        self.pos == ChainPos::Limbo
    }

    fn chain_start(&self) -> ChainPos {
        if self.training.is_empty() {
            ChainPos::Test
        } else {
            ChainPos::Train(0)
        }
    }

    fn observe(&self) -> Vec<f64> {
        match self.pos {
            ChainPos::Train(i) => vec![self.training[i].0 as f64, self.training[i].1 as f64],
            ChainPos::Test => vec![self.test as f64, 0.0],
            ChainPos::Limbo => vec![0.0, 0.0],
        }
    }
}

impl Environment for DeterministicDlp {
    fn name(&self) -> &'static str {
        "deterministic-dlp"
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.training.len() + 1
    }

    fn reset(&mut self, _rng: &mut SimRng) -> Vec<f64> {
        if !self.in_limbo() {
            self.pos = self.chain_start();
        }
        self.clock.start();
        self.observe()
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 2)?;
        let mut reward = 0.0;
        self.pos = match self.pos {
            ChainPos::Train(i) if i + 1 < self.training.len() => ChainPos::Train(i + 1),
            ChainPos::Train(_) => ChainPos::Test,
            ChainPos::Test => {
                if action_to_label(action) == label(&self.instance, self.test)? {
                    reward = 1.0;
                    self.chain_start()
                } else {
                    ChainPos::Limbo
                }
            }
            ChainPos::Limbo => ChainPos::Limbo,
        };
        let done = self.clock.tick(false, self.training.len() + 1);
        Ok(StepResult { observation: self.observe(), reward, done })
    }
}

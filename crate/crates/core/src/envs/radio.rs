use rand::Rng;

use super::{Clock, Environment, StepResult};
use crate::{Error, Result, SimRng};

/// `n` radio channels, exactly one occupied. The occupied channel moves up by one (cyclically)
/// every step. Picking the occupied channel costs `-1`, any other earns `+1`.
#[derive(Debug, Clone)]
pub struct CognitiveRadio {
    n: usize,
    max_steps: usize,
    occupied: usize,
    clock: Clock,
}

impl CognitiveRadio {
    pub const DEFAULT_STEPS: usize = 100;

    pub fn new(n_channels: usize, max_steps: usize) -> Result<Self> {
        if n_channels < 2 {
            return Err(Error::Config(format!("need at least 2 channels, got {n_channels}")));
        }
        if max_steps == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        Ok(Self { n: n_channels, max_steps, occupied: 0, clock: Clock::default() })
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    /// Start an episode with a chosen occupied channel.
    pub fn reset_to(&mut self, occupied: usize) -> Result<Vec<f64>> {
        if occupied >= self.n {
            return Err(Error::Index(format!("channel {occupied} ≥ {}", self.n)));
        }
        self.occupied = occupied;
        self.clock.start();
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        v[self.occupied] = 1.0;
        v
    }
}

impl Environment for CognitiveRadio {
    fn name(&self) -> &'static str {
        "cognitive-radio"
    }
    fn obs_dim(&self) -> usize {
        self.n
    }
    fn n_actions(&self) -> usize {
        self.n
    }
    fn horizon(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let c = rng.random_range(0..self.n);
        self.reset_to(c).expect("channel in range")
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, self.n)?;
        let reward = if action == self.occupied { -1.0 } else { 1.0 };
        self.occupied = (self.occupied + 1) % self.n;
        let done = self.clock.tick(false, self.max_steps);
        Ok(StepResult { observation: self.observe(), reward, done })
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::rollout;
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn collision_rewards() {
        let mut rng = rng_from_seed(0);
        for action in 0..4 {
            let mut env = CognitiveRadio::new(4, 100).unwrap();
            assert_eq!(env.reset_to(2).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
            let r = env.step(action, &mut rng).unwrap();
            assert_eq!(r.reward, if action == 2 { -1.0 } else { 1.0 });
            assert_eq!(r.observation, vec![0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn avoiding_policy_scores_full_episode() {
        let mut env = CognitiveRadio::new(5, 100).unwrap();
        let avoid = |o: &[f64]| (o.iter().position(|&v| v == 1.0).unwrap() + 1) % 5;
        assert_eq!(rollout(&mut env, 1, avoid), (100, 100.0));
        let collide = |o: &[f64]| o.iter().position(|&v| v == 1.0).unwrap();
        assert_eq!(rollout(&mut env, 1, collide), (100, -100.0));
    }

    #[test]
    fn bad_inputs() {
        assert!(CognitiveRadio::new(1, 10).is_err());
        let mut env = CognitiveRadio::new(3, 10).unwrap();
        assert!(env.reset_to(3).is_err());
        env.reset_to(0).unwrap();
        assert!(matches!(env.step(3, &mut rng_from_seed(0)), Err(Error::Index(_))));
    }
}

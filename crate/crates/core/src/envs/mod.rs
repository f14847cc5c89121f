//! Episodic task environments behind one interface.
//!
//! Observations are real vectors. Discrete states (DLP elements, radio occupation) are
//! encoded as reals. Binary-label tasks map label `+1` to action 0 and `-1` to action 1.

mod classic;
mod dlp_envs;
mod generated;
mod radio;

pub use classic::{
    acrobot_dynamics, acrobot_observation, cartpole_dynamics, classical_dynamics_step, mountaincar_dynamics, Acrobot,
    AcrobotParams, CartPole, CartPoleParams, ClassicKind, MountainCar, MountainCarParams,
};
pub use dlp_envs::{CliffwalkDlp, DeterministicDlp, SlDlp};
pub use generated::{generate_pqc_env, generate_pqc_env_with, CliffwalkPqc, PqcEnvSpec, SlPqc};
pub use radio::CognitiveRadio;

use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Maximum number of steps in an episode.
    fn horizon(&self) -> usize;
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64>;
    /// Fails with a protocol error before the first reset and after `done`.
    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<StepResult>;
}

pub fn label_to_action(label: i8) -> usize {
    if label > 0 {
        0
    } else {
        1
    }
}

pub fn action_to_label(action: usize) -> i8 {
    if action == 0 {
        1
    } else {
        -1
    }
}

/// Step counter and done-flag bookkeeping shared by all environments.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Clock {
    t: usize,
    live: bool,
}

impl Clock {
    pub(crate) fn start(&mut self) {
        self.t = 0;
        self.live = true;
    }

    pub(crate) fn check(&self, action: usize, n_actions: usize) -> Result<()> {
        if !self.live {
            return Err(Error::Protocol("step called without an active episode; call reset".into()));
        }
        if action >= n_actions {
            return Err(Error::Index(format!("action {action} ≥ {n_actions}")));
        }
        Ok(())
    }

    /// Count one step; the episode ends on `terminal` or when the horizon is reached.
    pub(crate) fn tick(&mut self, terminal: bool, horizon: usize) -> bool {
        self.t += 1;
        let done = terminal || self.t >= horizon;
        if done {
            self.live = false;
        }
        done
    }
}

pub(crate) fn finite(state: &[f64], what: &str) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup(format!("{what} state became non-finite: {state:?}")))
    }
}

use std::ops::Range;

use crate::{Error, Result};

/// Adam with a separate learning rate per contiguous parameter block. Steps ascend.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    groups: Vec<(Range<usize>, f64)>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    /// Parameters outside every group are never touched.
    pub fn new(n_params: usize, groups: Vec<(Range<usize>, f64)>) -> Result<Self> {
        for (r, lr) in &groups {
            if r.end > n_params || r.start > r.end {
                return Err(Error::Config(format!("group {r:?} outside {n_params} parameters")));
            }
            if !(lr.is_finite() && *lr >= 0.0) {
                return Err(Error::Config(format!("learning rate {lr} must be finite and ≥ 0")));
            }
        }
        Ok(Self { groups, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// `θ ← θ + α m̂ / (√v̂ + ε)` for each group.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Config(format!(
                "optimizer holds {} parameters, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (range, lr) in &self.groups {
            for i in range.clone() {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// β rising linearly from `start` to `end` over `episodes`, then held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub start: f64,
    pub end: f64,
    pub episodes: usize,
}

impl AnnealSchedule {
    pub fn new(end: f64, episodes: usize) -> Self {
        Self { start: 1.0, end, episodes }
    }

    pub fn constant(beta: f64) -> Self {
        Self { start: beta, end: beta, episodes: 0 }
    }

    pub fn beta(&self, episode: usize) -> f64 {
        if episode >= self.episodes {
            return self.end;
        }
        self.start + (self.end - self.start) * episode as f64 / self.episodes as f64
    }
}

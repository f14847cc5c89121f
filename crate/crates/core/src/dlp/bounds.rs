use crate::{Error, Result};

/// Value bounds for a classifier-driven policy on the slippery circular cliff walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub accuracy: f64,
    pub slip: f64,
    pub gamma: f64,
    /// `(x − 1)/(1 − xγδ)`
    pub upper: f64,
    /// `(x − 1)/(1 − γ)`
    pub lower: f64,
    /// `(x − 1)/(1 − δγx) + 1/(2 − γ)`: how far the upper bound sits above the random policy.
    pub gap: f64,
}

/// Value of the uniformly random policy from a uniform start: `−1/(2 − γ)`.
pub fn v_rand(gamma: f64) -> f64 {
    -1.0 / (2.0 - gamma)
}

pub fn cliffwalk_bounds(accuracy: f64, slip: f64, gamma: f64) -> Result<BoundReport> {
    let unit = 0.0..=1.0;
    if !unit.contains(&accuracy) || !unit.contains(&slip) || !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("need x, δ ∈ [0,1] and γ ∈ [0,1); got ({accuracy}, {slip}, {gamma})")));
    }
    if accuracy * gamma * slip >= 1.0 {
        return Err(Error::Domain("x·γ·δ must be < 1".into()));
    }
    let upper = (accuracy - 1.0) / (1.0 - accuracy * gamma * slip);
    Ok(BoundReport { accuracy, slip, gamma, upper, lower: (accuracy - 1.0) / (1.0 - gamma), gap: upper - v_rand(gamma) })
}

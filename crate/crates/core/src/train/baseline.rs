use nalgebra::{DMatrix, DVector};

use super::Trajectory;
use crate::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-5;

/// Linear state-value predictor over `(s, s², t/H, (t/H)², (t/H)³, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub weights: Vec<f64>,
    pub horizon: usize,
}

pub fn baseline_features(s: &[f64], t: usize, horizon: usize) -> Vec<f64> {
    let u = t as f64 / horizon.max(1) as f64;
    let mut f = Vec::with_capacity(2 * s.len() + 4);
    f.extend_from_slice(s);
    f.extend(s.iter().map(|x| x * x));
    f.extend([u, u * u, u * u * u, 1.0]);
    f
}

impl BaselineModel {
    /// Predicts zero everywhere.
    pub fn zero(obs_dim: usize, horizon: usize) -> Self {
        Self { weights: vec![0.0; 2 * obs_dim + 4], horizon }
    }

    pub fn predict(&self, s: &[f64], t: usize) -> f64 {
        baseline_features(s, t, self.horizon).iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

const REFINEMENT_ROUNDS: usize = 3;

/// Least-squares fit of the returns on the features of every visited `(s_t, t)`.
///
/// The normal equations are factorised with `ridge` added to the diagonal (bias excluded),
/// which keeps them solvable when features are collinear. A few rounds of iterative
/// refinement against the unregularised system then remove most of the shrinkage in
/// well-determined directions while leaving near-null directions small.
pub fn fit_baseline(trajectories: &[Trajectory], horizon: usize, ridge: f64) -> Result<BaselineModel> {
    let rows: Vec<(Vec<f64>, f64)> = trajectories
        .iter()
        .flat_map(|tr| tr.states.iter().zip(&tr.returns).enumerate().map(|(t, (s, g))| (baseline_features(s, t, horizon), *g)))
        .collect();
    let Some(dim) = rows.first().map(|r| r.0.len()) else {
        return Err(Error::Config("baseline needs at least one visited state".into()));
    };
    let x = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let mut gram = x.transpose() * &x;
    // the bias column (last) is not penalised
    for i in 0..dim - 1 {
        gram[(i, i)] += ridge;
    }
    let rhs = x.transpose() * y;
    let plain = x.transpose() * &x;
    let chol =
        gram.cholesky().ok_or_else(|| Error::NumericalBlowup("baseline normal equations are not positive definite".into()))?;
    let mut w = chol.solve(&rhs);
    for _ in 0..REFINEMENT_ROUNDS {
        let residual = &rhs - &plain * &w;
        w += chol.solve(&residual);
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalBlowup("baseline weights are not finite".into()));
    }
    Ok(BaselineModel { weights: w.iter().copied().collect(), horizon })
}

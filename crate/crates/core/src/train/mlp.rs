use rand::Rng;

use super::{Group, Policy};
use crate::pqc::softmax;
use crate::{Error, Result, SimRng};

/// Fully connected ReLU network with a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    widths: Vec<usize>,
    params: Vec<f64>,
}

impl MlpPolicy {
    /// `widths = [input, hidden…, actions]`; all zeros.
    pub fn zeros(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("layer widths {widths:?} need ≥ 2 positive entries")));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::Config("need at least 2 actions".into()));
        }
        let n = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self { widths, params: vec![0.0; n] })
    }

    /// He-uniform hidden weights, Glorot-uniform output weights, zero biases.
    pub fn random(widths: Vec<usize>, rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let layers = net.widths.len() - 1;
        let mut at = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let limit = if l + 1 == layers { (6.0 / (fan_in + fan_out) as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
            for p in &mut net.params[at..at + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            at += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// `depth` hidden layers of `width` units.
    pub fn with_shape(input: usize, depth: usize, width: usize, actions: usize, rng: &mut SimRng) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(actions);
        Self::random(widths, rng)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn check_input(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.widths[0] {
            return Err(Error::Config(format!("network expects {} inputs, got {}", self.widths[0], s.len())));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![s.to_vec()];
        let mut at = 0;
        let layers = self.widths.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[at..at + n_in * n_out];
            let b = &self.params[at + n_in * n_out..at + n_in * n_out + n_out];
            let x = &acts[l];
            let mut z: Vec<f64> = (0..n_out).map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>()).collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
            at += n_in * n_out + n_out;
        }
        acts
    }

    pub fn probabilities_of(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s)?;
        Ok(softmax(self.forward(s).last().unwrap(), 1.0))
    }

    /// Action distribution and `∇ log π(a|s)` by backpropagation.
    pub fn forward_backward(&self, s: &[f64], a: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(s)?;
        let n_act = *self.widths.last().unwrap();
        if a >= n_act {
            return Err(Error::Index(format!("action {a} ≥ {n_act}")));
        }
        let acts = self.forward(s);
        let probs = softmax(acts.last().unwrap(), 1.0);
        let mut delta: Vec<f64> = probs.iter().enumerate().map(|(b, p)| f64::from(u8::from(a == b)) - p).collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut end = self.params.len();
        for l in (0..self.widths.len() - 1).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let start = end - n_in * n_out - n_out;
            let x = &acts[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[start + o * n_in + i] = delta[o] * x[i];
                }
                grad[start + n_in * n_out + o] = delta[o];
            }
            if l > 0 {
                let w = &self.params[start..start + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| if x[i] > 0.0 { (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum() } else { 0.0 })
                    .collect();
            }
            end = start;
        }
        Ok((probs, grad))
    }
}

impl Policy for MlpPolicy {
    fn n_actions(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn params(&self) -> Vec<f64> {
        self.params.clone()
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.params.len() {
            return Err(Error::Config(format!("network has {} parameters, got {}", self.params.len(), theta.len())));
        }
        self.params.copy_from_slice(theta);
        Ok(())
    }

    fn groups(&self) -> Vec<(Group, std::ops::Range<usize>)> {
        vec![(Group::Net, 0..self.params.len())]
    }

    fn probabilities(&self, s: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        self.probabilities_of(s)
    }

    fn log_gradient(&self, s: &[f64], a: usize, _rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.forward_backward(s, a)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn zero_net_is_uniform() {
        let net = MlpPolicy::zeros(vec![3, 5, 5, 4]).unwrap();
        assert_eq!(net.probabilities_of(&[1.0, -2.0, 0.5]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(0);
        let h = 1e-5;
        for trial in 0..50 {
            let depth = 1 + trial % 4;
            let mut net = MlpPolicy::with_shape(3, depth, 6, 3, &mut rng).unwrap();
            // nonzero biases so that ReLU kinks are away from zero-input units
            let mut theta = net.params();
            theta.iter_mut().for_each(|p| *p += rng.random_range(-0.3..0.3));
            net.set_params(&theta).unwrap();
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = rng.random_range(0..3);
            let (_, g) = net.forward_backward(&s, a).unwrap();
            for i in 0..theta.len() {
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                let mut np = net.clone();
                np.set_params(&tp).unwrap();
                let mut nm = net.clone();
                nm.set_params(&tm).unwrap();
                let fd = (np.probabilities_of(&s).unwrap()[a].ln() - nm.probabilities_of(&s).unwrap()[a].ln()) / (2.0 * h);
                assert!((g[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-4), "trial {trial} param {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn score_identity() {
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let net = MlpPolicy::with_shape(4, 2, 8, 3, &mut rng).unwrap();
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let probs = net.probabilities_of(&s).unwrap();
            let mut acc = vec![0.0; net.params().len()];
            for a in 0..3 {
                let (_, g) = net.forward_backward(&s, a).unwrap();
                acc.iter_mut().zip(&g).for_each(|(x, gi)| *x += probs[a] * gi);
            }
            assert!(acc.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn shape_errors() {
        assert!(MlpPolicy::zeros(vec![3]).is_err());
        assert!(MlpPolicy::zeros(vec![3, 1]).is_err());
        let net = MlpPolicy::zeros(vec![2, 3, 2]).unwrap();
        assert!(net.probabilities_of(&[1.0]).is_err());
        assert!(net.forward_backward(&[1.0, 2.0], 2).is_err());
        assert_eq!(net.params().len(), 2 * 3 + 3 + 3 * 2 + 2);
    }
}

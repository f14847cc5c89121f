//! Monte Carlo policy gradient with a fitted linear baseline.

mod adam;
mod baseline;
mod mlp;

pub use adam::{Adam, AnnealSchedule};
pub use baseline::{baseline_features, fit_baseline, BaselineModel, DEFAULT_RIDGE};
pub use mlp::MlpPolicy;

use std::ops::Range;

use rayon::prelude::*;

use crate::dlp::DlpAgent;
use crate::envs::Environment;
use crate::pqc::{GradientMethod, ParamGroup, ParamVector, PqcPolicy};
use crate::qsim::sample_categorical;
use crate::{derive_seed, rng_from_seed, Error, Result, SimRng};

/// Parameter blocks that get their own learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Phi,
    Lam,
    W,
    Net,
}

/// A stochastic policy with a flat parameter vector.
pub trait Policy: Send + Sync {
    fn n_actions(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, theta: &[f64]) -> Result<()>;
    fn groups(&self) -> Vec<(Group, Range<usize>)>;
    fn probabilities(&self, s: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
    fn log_gradient(&self, s: &[f64], a: usize, rng: &mut SimRng) -> Result<Vec<f64>>;

    /// Inverse temperature, where the policy has one.
    fn set_beta(&mut self, _beta: f64) -> Result<()> {
        Ok(())
    }

    fn act(&self, s: &[f64], rng: &mut SimRng) -> Result<usize> {
        let probs = self.probabilities(s, rng)?;
        Ok(sample_categorical(&probs, rng))
    }
}

/// A circuit policy with its parameters and gradient method. Observations are multiplied
/// elementwise by `input_scale` (if set) before encoding.
#[derive(Debug, Clone)]
pub struct PqcAgent {
    pub policy: PqcPolicy,
    pub params: ParamVector,
    pub method: GradientMethod,
    pub input_scale: Option<Vec<f64>>,
}

impl PqcAgent {
    pub fn new(policy: PqcPolicy, rng: &mut SimRng) -> Self {
        let params = policy.init_params(rng);
        Self { policy, params, method: GradientMethod::Adjoint, input_scale: None }
    }

    fn scaled(&self, s: &[f64]) -> Result<Vec<f64>> {
        match &self.input_scale {
            None => Ok(s.to_vec()),
            Some(k) if k.len() == s.len() => Ok(s.iter().zip(k).map(|(a, b)| a * b).collect()),
            Some(k) => Err(Error::Config(format!("input scale has {} entries, observation {}", k.len(), s.len()))),
        }
    }
}

impl Policy for PqcAgent {
    fn n_actions(&self) -> usize {
        self.policy.n_actions()
    }

    fn params(&self) -> Vec<f64> {
        self.params.to_flat()
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.params.len() {
            return Err(Error::Config(format!("policy has {} parameters, got {}", self.params.len(), theta.len())));
        }
        let (np, nl) = (self.params.phi.len(), self.params.lam.len());
        self.params.phi.copy_from_slice(&theta[..np]);
        self.params.lam.copy_from_slice(&theta[np..np + nl]);
        self.params.w.copy_from_slice(&theta[np + nl..]);
        Ok(())
    }

    fn groups(&self) -> Vec<(Group, Range<usize>)> {
        vec![
            (Group::Phi, self.params.group_range(ParamGroup::Phi)),
            (Group::Lam, self.params.group_range(ParamGroup::Lam)),
            (Group::W, self.params.group_range(ParamGroup::W)),
        ]
    }

    fn probabilities(&self, s: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let s = self.scaled(s)?;
        match self.method {
            GradientMethod::Shots(r) => self.policy.probabilities_noisy(&s, &self.params, r, rng),
            _ => self.policy.probabilities(&s, &self.params),
        }
    }

    fn log_gradient(&self, s: &[f64], a: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        let s = self.scaled(s)?;
        match self.method {
            GradientMethod::Shots(r) => self.policy.log_policy_gradient_noisy(&s, a, &self.params, r, rng),
            m => self.policy.log_policy_gradient(&s, a, &self.params, m),
        }
    }

    fn set_beta(&mut self, beta: f64) -> Result<()> {
        self.policy.set_beta(beta)
    }
}

/// The classifier acts greedily on the first observation entry; elements outside `Z_p^*`
/// (the Deterministic-DLP limbo state) get action 0. Not differentiable.
impl Policy for DlpAgent {
    fn n_actions(&self) -> usize {
        2
    }

    fn params(&self) -> Vec<f64> {
        vec![]
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.is_empty() {
            Ok(())
        } else {
            Err(Error::Config("the classifier agent has no trainable parameters".into()))
        }
    }

    fn groups(&self) -> Vec<(Group, Range<usize>)> {
        vec![]
    }

    fn probabilities(&self, s: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let x = s.first().copied().unwrap_or(0.0);
        let a = if x >= 1.0 && self.instance.contains(x as u64) { DlpAgent::act(self, x as u64, rng)? } else { 0 };
        let mut p = vec![0.0; 2];
        p[a] = 1.0;
        Ok(p)
    }

    fn log_gradient(&self, _: &[f64], _: usize, _: &mut SimRng) -> Result<Vec<f64>> {
        Err(Error::Config("the classifier agent is not trainable".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    /// Seed the episode was generated from.
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// `G_t = r_{t+1} + γ G_{t+1}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

pub fn compute_returns(traj: &mut Trajectory, gamma: f64) {
    traj.returns = discounted_returns(&traj.rewards, gamma);
}

/// Roll out one episode of at most `horizon` steps. Returns are left empty.
pub fn run_episode(policy: &dyn Policy, env: &mut dyn Environment, horizon: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = rng_from_seed(seed);
    let mut s = env.reset(&mut rng);
    let mut tr = Trajectory { states: vec![], actions: vec![], rewards: vec![], returns: vec![], seed };
    for _ in 0..horizon {
        let a = policy.act(&s, &mut rng)?;
        let step = env.step(a, &mut rng)?;
        tr.states.push(std::mem::replace(&mut s, step.observation));
        tr.actions.push(a);
        tr.rewards.push(step.reward);
        if step.done {
            break;
        }
    }
    Ok(tr)
}

/// Episodes `first..first + n` of the run seeded by `seed`; each has its own derived seed.
pub fn generate_episodes(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    n: usize,
    horizon: usize,
    seed: u64,
    first: usize,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::Config("batch size must be ≥ 1".into()));
    }
    (first..first + n).map(|i| run_episode(policy, env, horizon, derive_seed(seed, &[0, i as u64]))).collect()
}

/// Per-trajectory `Σ_t ∇ log π(a_t|s_t) (G_t − V̂(s_t))`, or `None` when a raw policy hit a
/// vanishing action probability.
fn trajectory_gradient(
    policy: &dyn Policy,
    tr: &Trajectory,
    baseline: Option<&BaselineModel>,
    n: usize,
) -> Result<Option<Vec<f64>>> {
    let mut rng = rng_from_seed(derive_seed(tr.seed, &[1]));
    let mut g = vec![0.0; n];
    for (t, ((s, &a), ret)) in tr.states.iter().zip(&tr.actions).zip(&tr.returns).enumerate() {
        let adv = ret - baseline.map_or(0.0, |b| b.predict(s, t));
        if adv == 0.0 {
            continue;
        }
        match policy.log_gradient(s, a, &mut rng) {
            Ok(lg) => g.iter_mut().zip(&lg).for_each(|(x, l)| *x += adv * l),
            Err(Error::DegenerateProbability { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(g))
}

/// Batch-averaged policy gradient and the number of excluded episodes. Per-episode terms
/// are summed in index order, so the result does not depend on the thread pool.
pub fn estimate_gradient(
    policy: &dyn Policy,
    trajectories: &[Trajectory],
    baseline: Option<&BaselineModel>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(Vec<f64>, usize)> {
    if trajectories.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if trajectories.iter().any(|t| t.returns.len() != t.rewards.len()) {
        return Err(Error::Config("returns must be computed before the gradient".into()));
    }
    let n = policy.params().len();
    let per: Vec<Result<Option<Vec<f64>>>> = match pool {
        Some(pool) => pool.install(|| trajectories.par_iter().map(|tr| trajectory_gradient(policy, tr, baseline, n)).collect()),
        None => trajectories.iter().map(|tr| trajectory_gradient(policy, tr, baseline, n)).collect(),
    };
    let mut total = vec![0.0; n];
    let mut excluded = 0;
    for g in per {
        match g? {
            Some(g) => total.iter_mut().zip(&g).for_each(|(x, gi)| *x += gi),
            None => excluded += 1,
        }
    }
    let scale = 1.0 / trajectories.len() as f64;
    total.iter_mut().for_each(|x| *x *= scale);
    Ok((total, excluded))
}

/// One Adam ascent step along the estimated gradient. Returns the number of excluded episodes.
pub fn policy_gradient_step(
    policy: &mut dyn Policy,
    trajectories: &[Trajectory],
    baseline: Option<&BaselineModel>,
    optimizer: &mut Adam,
    pool: Option<&rayon::ThreadPool>,
) -> Result<usize> {
    let (grad, excluded) = estimate_gradient(policy, trajectories, baseline, pool)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalBlowup("policy gradient is not finite".into()));
    }
    let mut theta = policy.params();
    optimizer.step(&mut theta, &grad)?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup("parameters became non-finite".into()));
    }
    policy.set_params(&theta)?;
    Ok(excluded)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub phi: f64,
    pub w: f64,
    pub lam: f64,
    pub net: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { phi: 0.01, w: 0.1, lam: 0.01, net: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Step cap per episode; the environment's own horizon when `None`.
    pub horizon: Option<usize>,
    pub learning_rates: LearningRates,
    /// `None` keeps the policy's β fixed.
    pub beta_final: Option<f64>,
    pub use_baseline: bool,
    pub ridge: f64,
    pub freeze_lam: bool,
    pub freeze_w: bool,
    /// Worker threads for gradient evaluation; 1 runs inline.
    pub parallelism: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            batch_size: 10,
            gamma: 1.0,
            horizon: None,
            learning_rates: LearningRates::default(),
            beta_final: None,
            use_baseline: true,
            ridge: DEFAULT_RIDGE,
            freeze_lam: false,
            freeze_w: false,
            parallelism: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.episodes == 0 || self.batch_size == 0 {
            return bad("episodes and batch size must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("γ = {} ∉ [0, 1]", self.gamma));
        }
        if self.horizon == Some(0) {
            return bad("horizon must be ≥ 1".into());
        }
        if let Some(b) = self.beta_final {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("final β {b} must be positive"));
            }
        }
        if self.parallelism == 0 {
            return bad("parallelism must be ≥ 1".into());
        }
        if !(self.ridge >= 0.0) {
            return bad(format!("ridge {} must be ≥ 0", self.ridge));
        }
        Ok(())
    }

    fn optimizer_for(&self, policy: &dyn Policy) -> Result<Adam> {
        let lr = &self.learning_rates;
        let groups = policy
            .groups()
            .into_iter()
            .filter_map(|(g, r)| match g {
                Group::Phi => Some((r, lr.phi)),
                Group::Lam if !self.freeze_lam => Some((r, lr.lam)),
                Group::W if !self.freeze_w => Some((r, lr.w)),
                Group::Net => Some((r, lr.net)),
                _ => None,
            })
            .collect();
        Adam::new(policy.params().len(), groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Undiscounted.
    pub total_reward: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpisodeRecord>,
    /// Episodes dropped from gradient estimates because of a vanishing raw-policy probability.
    pub excluded: usize,
}

/// Full REINFORCE run. `on_episode` sees every record as soon as its batch is done.
pub fn train(
    policy: &mut dyn Policy,
    env: &mut dyn Environment,
    config: &TrainConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<TrainReport> {
    config.validate()?;
    let horizon = config.horizon.unwrap_or_else(|| env.horizon());
    let schedule = config.beta_final.map(|end| AnnealSchedule::new(end, config.episodes));
    let mut optimizer = config.optimizer_for(policy)?;
    let pool = if config.parallelism > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.parallelism)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let mut report = TrainReport { records: Vec::with_capacity(config.episodes), excluded: 0 };
    let mut first = 0;
    while first < config.episodes {
        let n = config.batch_size.min(config.episodes - first);
        let beta = match schedule {
            Some(s) => {
                let b = s.beta(first);
                policy.set_beta(b)?;
                b
            }
            None => f64::NAN,
        };
        let mut batch = generate_episodes(policy, env, n, horizon, seed, first)?;
        batch.iter_mut().for_each(|t| compute_returns(t, config.gamma));
        let baseline = if config.use_baseline { Some(fit_baseline(&batch, horizon, config.ridge)?) } else { None };
        report.excluded += policy_gradient_step(policy, &batch, baseline.as_ref(), &mut optimizer, pool.as_ref())?;
        for (i, tr) in batch.iter().enumerate() {
            let rec = EpisodeRecord { episode: first + i, total_reward: tr.total_reward(), beta };
            on_episode(&rec);
            report.records.push(rec);
        }
        first += n;
    }
    Ok(report)
}

/// Undiscounted returns of `episodes` rollouts with fixed parameters.
pub fn evaluate(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    episodes: usize,
    horizon: Option<usize>,
    seed: u64,
) -> Result<Vec<f64>> {
    let h = horizon.unwrap_or_else(|| env.horizon());
    (0..episodes).map(|i| Ok(run_episode(policy, env, h, derive_seed(seed, &[2, i as u64]))?.total_reward())).collect()
}

/// Trailing mean over the last `window` entries (fewer at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(window.max(1))..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

//! Self-check suites behind `gradcheck` and `dlp-verify`.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::seq::index::sample;
use rand::Rng;

use qpolicy::dlp::{
    accuracy, cliffwalk_bounds, discrete_log_bruteforce, feature_inner_product, label, mod_exp, smallest_generator,
    train_classifier, v_rand, ClassifierConfig, DlpInstance, NoiseModel,
};
use qpolicy::envs::{CliffwalkDlp, Environment};
use qpolicy::pqc::{
    parameter_shift_derivative_with, prepare_state, Entangler, GradientMethod, ParamVector, PolicyConfig, PqcPolicy, PqcTopology,
    SoftmaxObservables, WeightedTerm, PARAMETER_SHIFT,
};
use qpolicy::qsim::{ActionPartition, ObservableSpec, Pauli, PauliString, Term};
use qpolicy::train::discounted_returns;
use qpolicy::{derive_seed, rng_from_seed, Error, Result, SimRng};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-5;
/// Below this magnitude the relative tolerance is taken against the floor instead.
pub const FD_FLOOR: f64 = 1e-4;
pub const SCORE_TOL: f64 = 1e-8;
pub const MAX_QUBITS: usize = 4;
pub const MAX_DEPTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ParameterShift,
    ScoreIdentity,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::ParameterShift => "parameter-shift",
            Suite::ScoreIdentity => "score-identity",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parameter-shift" => Ok(Suite::ParameterShift),
            "score-identity" => Ok(Suite::ScoreIdentity),
            _ => Err(Error::Config(format!("unknown suite {s:?} (parameter-shift, score-identity)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case: usize,
    pub n_qubits: usize,
    pub depth: usize,
    pub n_params: usize,
    /// Worst error over the case, in units of its tolerance; `≤ 1` passes.
    pub worst_ratio: f64,
    pub max_abs_error: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| !c.passed()).count()
    }

    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.failures() == 0
    }
}

fn random_topology(rng: &mut SimRng) -> Result<PqcTopology> {
    let n = rng.random_range(1..=MAX_QUBITS);
    let depth = rng.random_range(0..=MAX_DEPTH);
    let entangler = [Entangler::OneToOne, Entangler::Circular, Entangler::AllToAll][rng.random_range(0..3)];
    let input_dim = rng.random_range(1..=2 * n);
    PqcTopology::new(n, depth, entangler, rng.random_bool(0.5), input_dim)
}

fn random_params(topo: &PqcTopology, n_weights: usize, rng: &mut SimRng) -> ParamVector {
    ParamVector {
        phi: (0..topo.n_phi()).map(|_| rng.random_range(0.0..TAU)).collect(),
        lam: (0..topo.n_lam()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        w: (0..n_weights).map(|_| rng.random_range(-2.0..2.0)).collect(),
    }
}

fn random_pauli(n: usize, rng: &mut SimRng) -> Result<PauliString> {
    loop {
        let ops: Vec<(usize, Pauli)> = (0..n)
            .filter_map(|q| match rng.random_range(0..4) {
                0 => None,
                1 => Some((q, Pauli::X)),
                2 => Some((q, Pauli::Y)),
                _ => Some((q, Pauli::Z)),
            })
            .collect();
        if !ops.is_empty() {
            return PauliString::new(ops);
        }
    }
}

fn random_observable(n: usize, rng: &mut SimRng) -> Result<ObservableSpec> {
    let terms = (0..rng.random_range(1..=3))
        .map(|_| Ok((rng.random_range(-1.5..1.5), Term::Pauli(random_pauli(n, rng)?))))
        .collect::<Result<_>>()?;
    Ok(ObservableSpec::new(terms))
}

fn random_input(topo: &PqcTopology, rng: &mut SimRng) -> Vec<f64> {
    (0..topo.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn flat_set(params: &ParamVector, i: usize, v: f64) -> Result<ParamVector> {
    let mut p = params.clone();
    p.set(i, v)?;
    Ok(p)
}

/// Parameter-shift derivatives of a random weighted Pauli observable against central
/// finite differences of the exact expectation, for every φ and λ coordinate.
pub fn parameter_shift_case(case: usize, rng: &mut SimRng, shift: f64) -> Result<CaseResult> {
    let topo = random_topology(rng)?;
    let params = random_params(&topo, 0, rng);
    let obs = random_observable(topo.n_qubits(), rng)?;
    let s = random_input(&topo, rng);
    let value = |p: &ParamVector| -> Result<f64> { prepare_state(&topo, &s, p)?.expectation(&obs) };
    let n = topo.n_phi() + topo.n_lam();
    let (mut worst, mut max_abs) = (0.0f64, 0.0f64);
    for i in 0..n {
        let ps = parameter_shift_derivative_with(&s, &params, &topo, &obs, i, shift)?;
        let x = params.get(i)?;
        let fd = (value(&flat_set(&params, i, x + FD_STEP)?)? - value(&flat_set(&params, i, x - FD_STEP)?)?) / (2.0 * FD_STEP);
        let err = (ps - fd).abs();
        max_abs = max_abs.max(err);
        worst = worst.max(err / (FD_REL_TOL * fd.abs().max(FD_FLOOR)));
    }
    Ok(CaseResult {
        case,
        n_qubits: topo.n_qubits(),
        depth: topo.d_enc(),
        n_params: n,
        worst_ratio: worst,
        max_abs_error: max_abs,
    })
}

fn random_policy(case: usize, topo: &PqcTopology, rng: &mut SimRng) -> Result<PqcPolicy> {
    let n = topo.n_qubits();
    let config = if case % 2 == 0 {
        let actions = rng.random_range(2..=4);
        let mut next_weight = 0;
        let obs = (0..actions)
            .map(|_| {
                (0..rng.random_range(1..=2))
                    .map(|_| {
                        // occasionally share a weight with an earlier term
                        let weight = if next_weight > 0 && rng.random_bool(0.3) {
                            rng.random_range(0..next_weight)
                        } else {
                            next_weight += 1;
                            next_weight - 1
                        };
                        Ok(WeightedTerm { coeff: rng.random_range(-1.0..1.0), weight, term: Term::Pauli(random_pauli(n, rng)?) })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        PolicyConfig::Softmax { observables: SoftmaxObservables::new(obs)?, beta: rng.random_range(0.5..3.0) }
    } else {
        let partition = if rng.random_bool(0.5) && n >= 1 {
            ActionPartition::parity(n, 2)?
        } else {
            ActionPartition::contiguous(n, rng.random_range(2..=(1usize << n).min(4)))?
        };
        PolicyConfig::Raw { partition }
    };
    PqcPolicy::new(topo.clone(), config)
}

/// `‖Σ_a π(a|s) ∇log π(a|s)‖_∞` for alternating softmax and raw policies. Draws whose
/// raw distribution has an entry ≤ 1e-6 are redrawn, since `∇log π` is not defined at 0.
pub fn score_identity_case(case: usize, rng: &mut SimRng) -> Result<CaseResult> {
    loop {
        let topo = random_topology(rng)?;
        let policy = random_policy(case, &topo, rng)?;
        let params = random_params(&topo, policy.n_weights(), rng);
        let s = random_input(&topo, rng);
        let probs = policy.probabilities(&s, &params)?;
        if probs.iter().any(|&p| p <= 1e-6) {
            continue;
        }
        let mut acc = vec![0.0; params.len()];
        for (a, p) in probs.iter().enumerate() {
            let g = policy.log_policy_gradient(&s, a, &params, GradientMethod::ParameterShift)?;
            acc.iter_mut().zip(&g).for_each(|(x, gi)| *x += p * gi);
        }
        let norm = acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        return Ok(CaseResult {
            case,
            n_qubits: topo.n_qubits(),
            depth: topo.d_enc(),
            n_params: params.len(),
            worst_ratio: norm / SCORE_TOL,
            max_abs_error: norm,
        });
    }
}

/// Runs the selected suites on `cases` random circuits each. `wrong_shift` replaces the
/// ±π/2 shift by ±π/4, which must make the parameter-shift suite fail.
pub fn run_suites(suites: &[Suite], cases: usize, seed: u64, wrong_shift: bool) -> Result<Vec<SuiteReport>> {
    if suites.is_empty() {
        return Err(Error::Config("no gradient-check suite selected".into()));
    }
    if cases == 0 {
        return Err(Error::Config("gradient checks need at least one case".into()));
    }
    let shift = if wrong_shift { FRAC_PI_4 } else { PARAMETER_SHIFT };
    suites
        .iter()
        .enumerate()
        .map(|(k, &suite)| {
            let mut rng = rng_from_seed(derive_seed(seed, &[k as u64]));
            let cases = (0..cases)
                .map(|c| match suite {
                    Suite::ParameterShift => parameter_shift_case(c, &mut rng, shift),
                    Suite::ScoreIdentity => score_identity_case(c, &mut rng),
                })
                .collect::<Result<_>>()?;
            Ok(SuiteReport { suite, cases })
        })
        .collect()
}

/// Counts of labels `(+1, −1)` over `Z_p^*`.
pub fn label_balance(instance: &DlpInstance) -> Result<(u64, u64)> {
    let mut plus = 0;
    for x in 1..instance.p() {
        if label(instance, x)? == 1 {
            plus += 1;
        }
    }
    Ok((plus, instance.order() - plus))
}

/// Compares the interval-overlap inner product with an explicit set intersection built
/// from modular powers and brute-force logarithms. Every `(x, s')` pair is checked when
/// `samples` is `None`, otherwise that many random pairs. Returns `(checked, mismatches)`.
pub fn oracle_equivalence(instance: &DlpInstance, k: u32, samples: Option<(usize, &mut SimRng)>) -> Result<(usize, usize)> {
    let (p, g) = (instance.p(), instance.g());
    let n = p - 1;
    let len = 1u64 << k;
    let half = n / 2;
    let logs: Vec<u64> = (1..p).map(|x| discrete_log_bruteforce(x, instance)).collect::<Result<_>>()?;
    let feature_set = |x: u64| -> Vec<u64> { (0..len).map(|j| mod_exp(g, (logs[x as usize - 1] + j) % n, p)).collect() };
    let check = |x: u64, s_prime: u64| -> Result<bool> {
        let mut member = vec![false; p as usize];
        for j in 0..half {
            member[mod_exp(g, (s_prime + j) % n, p) as usize] = true;
        }
        let overlap = feature_set(x).into_iter().filter(|&e| member[e as usize]).count() as u64;
        let brute = (overlap * overlap) as f64 / (len * half) as f64;
        Ok((feature_inner_product(x, s_prime, instance, k)? - brute).abs() <= 1e-12)
    };
    let (mut checked, mut bad) = (0, 0);
    match samples {
        None => {
            for x in 1..p {
                for s_prime in 0..n {
                    checked += 1;
                    bad += usize::from(!check(x, s_prime)?);
                }
            }
        }
        Some((count, rng)) => {
            for _ in 0..count {
                let (x, s_prime) = (rng.random_range(1..p), rng.random_range(0..n));
                checked += 1;
                bad += usize::from(!check(x, s_prime)?);
            }
        }
    }
    Ok((checked, bad))
}

/// Largest `k` with `2^k ≤ (p−1)/2`.
pub fn max_k(p: u64) -> u32 {
    let half = (p - 1) / 2;
    63 - half.max(1).leading_zeros()
}

/// One draw of the training experiment: a random offset, `n_train` distinct training
/// elements, the argmin trainer with `shots`-shot inner products, and the exhaustive
/// noiseless accuracy of the learned offset.
pub fn trained_accuracy(p: u64, k: u32, n_train: usize, shots: u64, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let g = smallest_generator(p)?;
    let instance = DlpInstance::new(p, g, rng.random_range(0..p - 1))?;
    let n_train = n_train.min(instance.order() as usize);
    let training: Vec<u64> = sample(&mut rng, instance.order() as usize, n_train).iter().map(|i| i as u64 + 1).collect();
    let config = ClassifierConfig::new(&instance, k, NoiseModel::Shots(shots))?;
    let s_prime = train_classifier(&instance, &training, &config, &mut rng)?;
    accuracy(&instance, s_prime, k)
}

/// Monte Carlo value of the uniformly random policy on the cliff walk with discount γ.
pub fn random_policy_value(p: u64, gamma: f64, episodes: usize, seed: u64) -> Result<f64> {
    let g = smallest_generator(p)?;
    let mut env = CliffwalkDlp::new(DlpInstance::new(p, g, 0)?, 0.0, CliffwalkDlp::DEFAULT_MAX_STEPS)?;
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        env.reset(&mut rng);
        let mut rewards = vec![];
        loop {
            let step = env.step(rng.random_range(0..2), &mut rng)?;
            rewards.push(step.reward);
            if step.done {
                break;
            }
        }
        total += discounted_returns(&rewards, gamma)[0];
    }
    Ok(total / episodes as f64)
}

pub const GAP_POINT: (f64, f64, f64) = (0.51, 0.86, 0.9);
pub const GAP_VALUE: f64 = 0.0995;
pub const GAP_TOL: f64 = 0.0005;
pub const VRAND_GAMMAS: [f64; 3] = [0.0, 0.5, 0.9];
pub const VRAND_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    pub fn of(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
        }
    }
}

/// A row of the `dlp-verify` report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub check: String,
    pub params: String,
    pub value: f64,
    pub reference: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub p: u64,
    pub trials: usize,
    pub n_train: usize,
    pub shots: u64,
    pub mc_episodes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { p: 101, trials: 20, n_train: 64, shots: 4096, mc_episodes: 100_000 }
    }
}

/// Oracle pairs are exhaustive up to this modulus and sampled beyond it.
const EXHAUSTIVE_ORACLE_P: u64 = 211;
const SAMPLED_ORACLE_PAIRS: usize = 2000;

pub fn dlp_verify(opts: &VerifyOptions, seed: u64) -> Result<Vec<VerifyRow>> {
    let p = opts.p;
    let g = smallest_generator(p)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[0]));
    let instance = DlpInstance::new(p, g, rng.random_range(0..p - 1))?;
    let mut rows = vec![];
    let mut row = |check: &str, params: String, value: f64, reference: f64, status: Status| {
        rows.push(VerifyRow { check: check.into(), params, value, reference, status })
    };

    let (plus, minus) = label_balance(&instance)?;
    let ps = format!("p={p} g={g} s={}", instance.s());
    row("label-balance-plus", ps.clone(), plus as f64, (instance.order() / 2) as f64, Status::of(plus == instance.order() / 2));
    row("label-balance-minus", ps, minus as f64, (instance.order() / 2) as f64, Status::of(minus == instance.order() / 2));

    for k in 0..=max_k(p) {
        let samples = (p > EXHAUSTIVE_ORACLE_P).then_some((SAMPLED_ORACLE_PAIRS, &mut rng));
        let (checked, bad) = oracle_equivalence(&instance, k, samples)?;
        row("oracle-mismatches", format!("p={p} k={k} pairs={checked}"), bad as f64, 0.0, Status::of(bad == 0));
    }

    for k in 0..=max_k(p) {
        let acc = accuracy(&instance, instance.s(), k)?;
        let delta = ClassifierConfig::new(&instance, k, NoiseModel::Exact)?.delta(&instance);
        row("ideal-accuracy-vs-1-delta", format!("p={p} k={k}"), acc, 1.0 - delta, Status::Info);
    }

    for k in 0..=max_k(p) {
        let accs: Vec<f64> = (0..opts.trials)
            .map(|t| trained_accuracy(p, k, opts.n_train, opts.shots, derive_seed(seed, &[1, k as u64, t as u64])))
            .collect::<Result<_>>()?;
        let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
        let hit = accs.iter().filter(|&&a| a >= 0.95).count() as f64 / accs.len().max(1) as f64;
        let params = format!("p={p} k={k} train={} shots={} trials={}", opts.n_train, opts.shots, opts.trials);
        row("trained-accuracy-mean", params.clone(), mean, f64::NAN, Status::Info);
        row("trained-accuracy-share-0.95", params, hit, f64::NAN, Status::Info);
    }

    let (x, d, gm) = GAP_POINT;
    let gap = cliffwalk_bounds(x, d, gm)?;
    let params = format!("x={x} slip={d} gamma={gm}");
    row("bound-gap", params.clone(), gap.gap, GAP_VALUE, Status::of((gap.gap - GAP_VALUE).abs() <= GAP_TOL));
    row("bound-upper", params.clone(), gap.upper, f64::NAN, Status::Info);
    row("bound-lower", params, gap.lower, f64::NAN, Status::Info);
    for &acc in &[0.6, 0.8, 0.95] {
        for &slip in &[0.0, 0.5, 1.0] {
            let b = cliffwalk_bounds(acc, slip, 0.9)?;
            let params = format!("x={acc} slip={slip} gamma=0.9");
            row("bound-upper", params.clone(), b.upper, f64::NAN, Status::Info);
            row("bound-lower", params, b.lower, f64::NAN, Status::Info);
        }
    }
    for (i, &gamma) in VRAND_GAMMAS.iter().enumerate() {
        let mc = random_policy_value(p, gamma, opts.mc_episodes, derive_seed(seed, &[2, i as u64]))?;
        let exact = v_rand(gamma);
        row("v-rand-closed-form", format!("gamma={gamma}"), exact, -1.0 / (2.0 - gamma), Status::Info);
        row(
            "v-rand-monte-carlo",
            format!("gamma={gamma} episodes={}", opts.mc_episodes),
            mc,
            exact,
            Status::of((mc - exact).abs() <= VRAND_TOL),
        );
    }
    Ok(rows)
}

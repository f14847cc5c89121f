//! Experiment runner behind the `qpolicy` binary: config files, seeding, the five
//! subcommands and their CSV/SVG output.

pub mod build;
pub mod checks;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qpolicy::envs::generate_pqc_env;
use qpolicy::train::{evaluate, moving_average, train, Policy};
use qpolicy::Error;

use crate::checks::{Suite, SuiteReport, VerifyOptions, VerifyRow};
use crate::config::{ExperimentConfig, PolicySection};
use crate::output::{
    aggregate, ensure_dir, io_err, learning_curve_svg, load_params, params_text, write_aggregate_csv, write_csv, write_run_csv,
    AggregateRow, RunRow, MOVING_AVERAGE_WINDOW, SCHEMA_VERSION,
};

/// Why a subcommand stopped.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    /// A verification suite ran and found a violation.
    Check(String),
    /// Training hit a non-finite value; `dump` holds the state at the time.
    Abort {
        error: Error,
        dump: PathBuf,
    },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Abort { error, dump } => write!(f, "{error} (state dumped to {})", dump.display()),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Check(_) => EXIT_CHECK,
            Failure::Abort { .. } => EXIT_NUMERICAL,
            Failure::Core(e) => match e {
                Error::NumericalBlowup(_) | Error::DegenerateProbability { .. } | Error::Protocol(_) => EXIT_NUMERICAL,
                Error::Config(_)
                | Error::Index(_)
                | Error::Domain(_)
                | Error::OracleRefused(_)
                | Error::DegenerateGenerator(_) => EXIT_CONFIG,
            },
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Seed of run `i` under the command-line seed.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(run as u64)
}

fn fixed_beta(cfg: &ExperimentConfig) -> Option<f64> {
    match &cfg.policy {
        PolicySection::SoftmaxPqc { beta, .. } => Some(*beta),
        _ => None,
    }
}

/// A finished training run.
pub struct RunResult {
    pub seed: u64,
    pub rows: Vec<RunRow>,
    pub policy: Box<dyn Policy>,
}

/// Trains one agent. On a numerical failure the partial rows and current parameters are
/// returned alongside the error.
pub fn train_run(cfg: &ExperimentConfig, seed: u64) -> std::result::Result<RunResult, (Error, Option<RunResult>)> {
    let built = build::build(&cfg.env, &cfg.policy, seed).map_err(|e| (e, None))?;
    let (mut env, mut policy) = (built.env, built.policy);
    let tc = cfg.trainer.to_train_config();
    let beta = fixed_beta(cfg);
    let start = Instant::now();
    let clock = cfg.output.record_wall_clock;
    let mut rows = Vec::with_capacity(tc.episodes);
    let result = train(policy.as_mut(), env.as_mut(), &tc, seed, |r| {
        rows.push(RunRow {
            seed,
            episode: r.episode,
            ret: r.total_reward,
            moving_avg: 0.0,
            beta: if r.beta.is_nan() { beta } else { Some(r.beta) },
            wall_ms: if clock { start.elapsed().as_millis() } else { 0 },
        })
    });
    let returns: Vec<f64> = rows.iter().map(|r| r.ret).collect();
    for (row, ma) in rows.iter_mut().zip(moving_average(&returns, MOVING_AVERAGE_WINDOW)) {
        row.moving_avg = ma;
    }
    let run = RunResult { seed, rows, policy };
    match result {
        Ok(_) => Ok(run),
        Err(e) => Err((e, Some(run))),
    }
}

pub struct TrainOutput {
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn run_csv_name(seed: u64) -> String {
    format!("run_seed{seed}.csv")
}

pub fn params_name(seed: u64) -> String {
    format!("params_seed{seed}.txt")
}

/// `train`: one CSV and parameter dump per run, then `aggregate.csv` and the plot.
pub fn run_train(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Outcome<TrainOutput> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut runs = Vec::with_capacity(cfg.runs);
    for i in 0..cfg.runs {
        let s = run_seed(seed, i);
        match train_run(cfg, s) {
            Ok(run) => {
                write_run_csv(&out.join(run_csv_name(s)), &run.rows)?;
                fs::write(out.join(params_name(s)), params_text(run.policy.as_ref())).map_err(|e| io_err(out, e))?;
                runs.push(run);
            }
            Err((error, partial)) => {
                let numerical = matches!(error, Error::NumericalBlowup(_) | Error::DegenerateProbability { .. });
                let Some(run) = partial.filter(|_| numerical) else {
                    return Err(Failure::Core(error));
                };
                let dump = out.join(format!("abort_seed{s}.txt"));
                let returns: Vec<String> = run.rows.iter().map(|r| r.ret.to_string()).collect();
                let text = format!(
                    "# aborted: {error}\n# episodes completed: {}\n# returns: {}\n{}",
                    run.rows.len(),
                    returns.join(" "),
                    params_text(run.policy.as_ref())
                );
                fs::write(&dump, text).map_err(|e| io_err(&dump, e))?;
                write_run_csv(&out.join(run_csv_name(s)), &run.rows)?;
                return Err(Failure::Abort { error, dump });
            }
        }
    }
    let rows: Vec<Vec<RunRow>> = runs.iter().map(|r| r.rows.clone()).collect();
    let agg = aggregate(&rows);
    write_aggregate_csv(&out.join("aggregate.csv"), &agg)?;
    if cfg.output.plot {
        let title = format!("{} · {} run(s)", cfg.output.dir, cfg.runs);
        let svg = out.join("learning_curve.svg");
        fs::write(&svg, learning_curve_svg(&title, &rows, &agg)).map_err(|e| io_err(&svg, e))?;
    }
    Ok(TrainOutput { runs, aggregate: agg })
}

/// `eval`: fixed-parameter rollouts of the seed's policy, optionally loading a dump.
pub fn run_eval(cfg: &ExperimentConfig, seed: u64, params: Option<&Path>, out: &Path) -> Outcome<Vec<f64>> {
    cfg.validate()?;
    let built = build::build(&cfg.env, &cfg.policy, seed)?;
    let (mut env, mut policy) = (built.env, built.policy);
    if let Some(path) = params {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        load_params(policy.as_mut(), &text)?;
    }
    let returns = evaluate(policy.as_ref(), env.as_mut(), cfg.eval.episodes, cfg.trainer.horizon, seed)?;
    ensure_dir(out)?;
    write_csv(
        &out.join(format!("eval_seed{seed}.csv")),
        &["schema_version", "seed", "episode", "return"],
        returns.iter().enumerate().map(|(i, r)| vec![SCHEMA_VERSION.to_string(), seed.to_string(), i.to_string(), r.to_string()]),
    )?;
    Ok(returns)
}

/// `gradcheck`: writes `gradcheck.csv` and fails if any case of any suite fails.
pub fn run_gradcheck(suites: &[Suite], cases: usize, seed: u64, wrong_shift: bool, out: &Path) -> Outcome<Vec<SuiteReport>> {
    let reports = checks::run_suites(suites, cases, seed, wrong_shift)?;
    ensure_dir(out)?;
    let rows = reports.iter().flat_map(|r| {
        r.cases.iter().map(move |c| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.suite.name().to_string(),
                c.case.to_string(),
                c.n_qubits.to_string(),
                c.depth.to_string(),
                c.n_params.to_string(),
                c.max_abs_error.to_string(),
                c.worst_ratio.to_string(),
                c.passed().to_string(),
            ]
        })
    });
    write_csv(
        &out.join("gradcheck.csv"),
        &["schema_version", "suite", "case", "n_qubits", "depth", "n_params", "max_abs_error", "error_over_tolerance", "pass"],
        rows,
    )?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({} of {} cases)", r.suite.name(), r.failures(), r.cases.len()))
        .collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

/// `dlp-verify`: writes `dlp_verify.csv`; informational rows never fail.
pub fn run_dlp_verify(opts: &VerifyOptions, seed: u64, out: &Path) -> Outcome<Vec<VerifyRow>> {
    let rows = checks::dlp_verify(opts, seed)?;
    ensure_dir(out)?;
    write_csv(
        &out.join("dlp_verify.csv"),
        &["schema_version", "check", "params", "value", "reference", "status"],
        rows.iter().map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.check.clone(),
                r.params.clone(),
                r.value.to_string(),
                if r.reference.is_nan() { String::new() } else { r.reference.to_string() },
                r.status.as_str().to_string(),
            ]
        }),
    )?;
    let failed: Vec<String> =
        rows.iter().filter(|r| r.status == checks::Status::Fail).map(|r| format!("{} [{}]", r.check, r.params)).collect();
    if failed.is_empty() {
        Ok(rows)
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

/// `gen-env`: the labelled dataset and circuit parameters of a generated task.
pub fn run_gen_env(seed: u64, out: &Path) -> Outcome<qpolicy::envs::PqcEnvSpec> {
    let spec = generate_pqc_env(seed)?;
    ensure_dir(out)?;
    let rows = spec
        .dataset
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            Ok(vec![
                SCHEMA_VERSION.to_string(),
                i.to_string(),
                x[0].to_string(),
                x[1].to_string(),
                y.to_string(),
                spec.zz(*x)?.to_string(),
            ])
        })
        .collect::<qpolicy::Result<Vec<_>>>()?;
    write_csv(&out.join(format!("gen_env_seed{seed}.csv")), &["schema_version", "index", "x0", "x1", "label", "zz"], rows)?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let text = format!(
        "# generated labelling circuit, seed {seed}\nmargin {}\nepisode_len {}\nphi {}\nlam {}\n",
        spec.margin,
        spec.episode_len,
        join(&spec.params.phi),
        join(&spec.params.lam)
    );
    let path = out.join(format!("gen_env_seed{seed}.txt"));
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(spec)
}

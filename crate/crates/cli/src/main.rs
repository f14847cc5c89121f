use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qpolicy_cli::checks::{Status, Suite, VerifyOptions};
use qpolicy_cli::config::ExperimentConfig;
use qpolicy_cli::output::{mean_std, output_root};
use qpolicy_cli::{run_dlp_verify, run_eval, run_gen_env, run_gradcheck, run_train, Failure, Outcome, EXIT_CONFIG};

/// Quantum-circuit policy experiments. Output goes under $QPOLICY_OUTPUT_ROOT (default: .).
#[derive(Parser)]
#[command(name = "qpolicy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train `runs` agents; run i uses seed SEED+i.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory below the output root; defaults to the config's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a fixed policy for `eval.episodes` episodes.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Parameter dump written by `train`; the seed's initial parameters otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter-shift vs finite differences, and the score identity, on random circuits.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Comma-separated: parameter-shift, score-identity.
        #[arg(long, default_value = "parameter-shift,score-identity")]
        suite: String,
        /// Use a ±π/4 shift; the parameter-shift suite must then fail.
        #[arg(long)]
        wrong_shift: bool,
        #[arg(long, default_value = "gradcheck")]
        out: PathBuf,
    },
    /// Discrete-log checks: label balance, overlap oracle, training table, value bounds.
    DlpVerify {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 101)]
        p: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 64)]
        train_size: usize,
        #[arg(long, default_value_t = 4096)]
        shots: u64,
        #[arg(long, default_value_t = 100_000)]
        mc_episodes: usize,
        #[arg(long, default_value = "dlp_verify")]
        out: PathBuf,
    },
    /// Generate a circuit-labelled task and dump its dataset.
    GenEnv {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "gen_env")]
        out: PathBuf,
    },
}

fn load(path: &std::path::Path) -> Outcome<ExperimentConfig> {
    Ok(ExperimentConfig::load(path)?)
}

fn run(cmd: Command) -> Outcome<()> {
    let root = output_root();
    match cmd {
        Command::Train { config, seed, out } => {
            let cfg = load(&config)?;
            let dir = root.join(out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir)));
            let res = run_train(&cfg, seed, &dir)?;
            for run in &res.runs {
                let last = run.rows.last().map_or(f64::NAN, |r| r.moving_avg);
                println!("seed {}: {} episodes, final moving average {last}", run.seed, run.rows.len());
            }
            println!("wrote {}", dir.display());
        }
        Command::Eval { config, seed, params, out } => {
            let cfg = load(&config)?;
            let dir = root.join(out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir)));
            let returns = run_eval(&cfg, seed, params.as_deref(), &dir)?;
            let (m, s) = mean_std(&returns);
            println!("{} episodes: mean return {m} (std {s})", returns.len());
        }
        Command::Gradcheck { seed, cases, suite, wrong_shift, out } => {
            let suites: Vec<Suite> =
                suite.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<qpolicy::Result<_>>()?;
            let dir = root.join(out);
            let result = run_gradcheck(&suites, cases, seed, wrong_shift, &dir);
            match &result {
                Ok(reports) => {
                    for r in reports {
                        println!("{}: PASS ({} cases)", r.suite.name(), r.cases.len());
                    }
                }
                Err(Failure::Check(m)) => println!("FAIL: {m}"),
                Err(_) => {}
            }
            result?;
        }
        Command::DlpVerify { seed, p, trials, train_size, shots, mc_episodes, out } => {
            let opts = VerifyOptions { p, trials, n_train: train_size, shots, mc_episodes };
            let dir = root.join(out);
            let result = run_dlp_verify(&opts, seed, &dir);
            if let Ok(rows) = &result {
                for r in rows.iter().filter(|r| r.status != Status::Info) {
                    println!("{} {} [{}]: {}", r.status.as_str().to_uppercase(), r.check, r.params, r.value);
                }
            }
            result?;
        }
        Command::GenEnv { seed, out } => {
            let dir = root.join(out);
            let spec = run_gen_env(seed, &dir)?;
            println!("generated {} labelled points (margin {}) in {}", spec.dataset.len(), spec.margin, dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

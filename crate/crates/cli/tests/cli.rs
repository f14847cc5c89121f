use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qpolicy_cli::config::ExperimentConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn qpolicy(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpolicy")).args(args).env("QPOLICY_OUTPUT_ROOT", root).output().unwrap()
}

fn small_cartpole(dir: &Path, runs: usize, episodes: usize) -> PathBuf {
    let text = fs::read_to_string(configs().join("cartpole.toml"))
        .unwrap()
        .replace("runs = 5", &format!("runs = {runs}"))
        .replace("episodes = 2000", &format!("episodes = {episodes}"));
    let path = dir.join("cp.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Plain comma split; none of our fields are quoted.
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn shipped_configs_round_trip() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn every_subcommand_requires_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_cartpole(tmp.path(), 1, 10);
    let c = cfg.to_str().unwrap();
    for args in
        [vec!["train", "--config", c], vec!["eval", "--config", c], vec!["gradcheck"], vec!["dlp-verify"], vec!["gen-env"]]
    {
        let out = qpolicy(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    }
    assert!(fs::read_dir(tmp.path()).unwrap().count() == 1, "nothing but the config was written");
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_cartpole(tmp.path(), 1, 10);
    let typo = tmp.path().join("typo.toml");
    fs::write(&typo, fs::read_to_string(&cfg).unwrap().replace("gamma = 1.0", "gamma = 1.0\ngama = 0.9")).unwrap();
    for path in [typo, tmp.path().join("missing.toml")] {
        let out = qpolicy(tmp.path(), &["train", "--config", path.to_str().unwrap(), "--seed", "0"]);
        assert_eq!(out.status.code(), Some(1));
    }
    let out = qpolicy(tmp.path(), &["dlp-verify", "--seed", "0", "--p", "100"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_writes_ordered_rows_and_a_consistent_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_cartpole(tmp.path(), 3, 25);
    let out = qpolicy(tmp.path(), &["train", "--config", cfg.to_str().unwrap(), "--seed", "40", "--out", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("run");
    let mut per_seed = vec![];
    for seed in 40..43 {
        let (header, rows) = read_table(&dir.join(format!("run_seed{seed}.csv")));
        assert_eq!(header, ["schema_version", "seed", "episode", "return", "moving_avg", "beta", "wall_ms"]);
        assert_eq!(rows.len(), 25);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!((r[0].as_str(), r[1].parse::<u64>().unwrap(), r[2].parse::<usize>().unwrap()), ("1", seed, i));
            assert_eq!(r[6], "0");
        }
        let rets: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
        let mas: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
        for i in 0..rets.len() {
            let lo = i.saturating_sub(9);
            let direct = rets[lo..=i].iter().sum::<f64>() / (i - lo + 1) as f64;
            assert!((mas[i] - direct).abs() < 1e-12);
        }
        per_seed.push((rets, mas));
        assert!(dir.join(format!("params_seed{seed}.txt")).exists());
    }
    let (header, agg) = read_table(&dir.join("aggregate.csv"));
    assert_eq!(header[..4], ["schema_version", "episode", "n_seeds", "return_mean"]);
    assert_eq!(agg.len(), 25);
    for (i, row) in agg.iter().enumerate() {
        let col = |k: usize| row[k].parse::<f64>().unwrap();
        let rets: Vec<f64> = per_seed.iter().map(|s| s.0[i]).collect();
        let mean = rets.iter().sum::<f64>() / 3.0;
        let std = (rets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        let ma_mean = per_seed.iter().map(|s| s.1[i]).sum::<f64>() / 3.0;
        assert_eq!(row[2], "3");
        assert!((col(3) - mean).abs() < 1e-9 && (col(4) - std).abs() < 1e-9 && (col(5) - ma_mean).abs() < 1e-9);
    }
    let svg = fs::read_to_string(dir.join("learning_curve.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn eval_loads_trained_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_cartpole(tmp.path(), 1, 20);
    let c = cfg.to_str().unwrap();
    assert!(qpolicy(tmp.path(), &["train", "--config", c, "--seed", "3", "--out", "t"]).status.success());
    let params = tmp.path().join("t/params_seed3.txt");
    let out = qpolicy(tmp.path(), &["eval", "--config", c, "--seed", "3", "--params", params.to_str().unwrap(), "--out", "e"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_table(&tmp.path().join("e/eval_seed3.csv"));
    assert_eq!(rows.len(), 100);
    fs::write(&params, "phi 1 2 3\n").unwrap();
    let out = qpolicy(tmp.path(), &["eval", "--config", c, "--seed", "3", "--params", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = qpolicy(tmp.path(), &["gradcheck", "--seed", "0", "--cases", "10"]);
    assert_eq!(ok.status.code(), Some(0));
    let (_, rows) = read_table(&tmp.path().join("gradcheck/gradcheck.csv"));
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r[8] == "true"));

    let wrong = qpolicy(tmp.path(), &["gradcheck", "--seed", "0", "--cases", "10", "--wrong-shift"]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stdout).contains("FAIL"));

    for suite in ["", ",", "gradient"] {
        let out = qpolicy(tmp.path(), &["gradcheck", "--seed", "0", "--suite", suite]);
        assert_eq!(out.status.code(), Some(1), "{suite:?}");
    }
}

#[test]
fn numerical_blowup_aborts_with_a_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_cartpole(tmp.path(), 1, 30);
    let text = fs::read_to_string(&cfg).unwrap().replace("lr_phi = 0.01", "lr_phi = 1e308").replace("lr_w = 0.1", "lr_w = 1e308");
    fs::write(&cfg, text).unwrap();
    let out = qpolicy(tmp.path(), &["train", "--config", cfg.to_str().unwrap(), "--seed", "0", "--out", "bad"]);
    assert_eq!(out.status.code(), Some(3));
    let dump = fs::read_to_string(tmp.path().join("bad/abort_seed0.txt")).unwrap();
    assert!(dump.starts_with("# aborted:") && dump.contains("\nphi "));
}

#[test]
fn dlp_verify_report_contents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qpolicy(tmp.path(), &["dlp-verify", "--seed", "0", "--trials", "3", "--mc-episodes", "20000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let (_, rows) = read_table(&tmp.path().join("dlp_verify/dlp_verify.csv"));
    let find = |check: &str, params: &str| rows.iter().find(|r| r[1] == check && r[2] == params).unwrap().clone();
    let gap: f64 = find("bound-gap", "x=0.51 slip=0.86 gamma=0.9")[3].parse().unwrap();
    assert!((gap - 0.0995).abs() <= 0.0005);
    let v: f64 = find("v-rand-closed-form", "gamma=0.9")[3].parse().unwrap();
    assert!((v + 1.0 / 1.1).abs() < 1e-15);
    let oracle: Vec<_> = rows.iter().filter(|r| r[1] == "oracle-mismatches").collect();
    assert_eq!(oracle.len(), 6);
    assert!(oracle.iter().all(|r| r[3] == "0" && r[5] == "pass"));
}

#[test]
fn gen_env_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(qpolicy(tmp.path(), &["gen-env", "--seed", "0"]).status.success());
    let (header, rows) = read_table(&tmp.path().join("gen_env/gen_env_seed0.csv"));
    assert_eq!(header, ["schema_version", "index", "x0", "x1", "label", "zz"]);
    assert_eq!(rows.len(), 20);
    for r in &rows {
        let zz: f64 = r[5].parse().unwrap();
        assert_eq!(r[4], if zz >= 0.0 { "1" } else { "-1" });
    }
    assert_eq!(rows.iter().filter(|r| r[4] == "1").count(), 10);
}

//! CSV, parameter dumps and the SVG learning curve.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qpolicy::train::{Group, Policy};
use qpolicy::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MOVING_AVERAGE_WINDOW: usize = 10;
pub const RUN_HEADER: [&str; 7] = ["schema_version", "seed", "episode", "return", "moving_avg", "beta", "wall_ms"];
pub const AGGREGATE_HEADER: [&str; 7] =
    ["schema_version", "episode", "n_seeds", "return_mean", "return_std", "moving_avg_mean", "moving_avg_std"];

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

/// Root for all output files: `$QPOLICY_OUTPUT_ROOT`, else the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os("QPOLICY_OUTPUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// One per-episode row of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub seed: u64,
    pub episode: usize,
    pub ret: f64,
    pub moving_avg: f64,
    /// `None` for policies without an inverse temperature.
    pub beta: Option<f64>,
    pub wall_ms: u128,
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_run_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    write_csv(
        path,
        &RUN_HEADER,
        rows.iter().map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.seed.to_string(),
                r.episode.to_string(),
                r.ret.to_string(),
                r.moving_avg.to_string(),
                r.beta.map(|b| b.to_string()).unwrap_or_default(),
                r.wall_ms.to_string(),
            ]
        }),
    )
}

/// Reads back `(episode, return, moving_avg)` from a run CSV.
pub fn read_run_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = r.headers().map_err(|e| io_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != RUN_HEADER {
        return Err(io_err(path, "unexpected header"));
    }
    let mut out = vec![];
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| io_err(path, e));
        out.push((rec[2].parse().map_err(|e| io_err(path, e))?, num(3)?, num(4)?));
    }
    Ok(out)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-episode mean ± std across runs, over the episodes every run has.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub n_seeds: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub moving_avg_mean: f64,
    pub moving_avg_std: f64,
}

pub fn aggregate(runs: &[Vec<RunRow>]) -> Vec<AggregateRow> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let rets: Vec<f64> = runs.iter().map(|r| r[i].ret).collect();
            let mas: Vec<f64> = runs.iter().map(|r| r[i].moving_avg).collect();
            let (return_mean, return_std) = mean_std(&rets);
            let (moving_avg_mean, moving_avg_std) = mean_std(&mas);
            AggregateRow {
                episode: runs[0][i].episode,
                n_seeds: runs.len(),
                return_mean,
                return_std,
                moving_avg_mean,
                moving_avg_std,
            }
        })
        .collect()
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_csv(
        path,
        &AGGREGATE_HEADER,
        rows.iter().map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.episode.to_string(),
                r.n_seeds.to_string(),
                r.return_mean.to_string(),
                r.return_std.to_string(),
                r.moving_avg_mean.to_string(),
                r.moving_avg_std.to_string(),
            ]
        }),
    )
}

fn group_name(g: Group) -> &'static str {
    match g {
        Group::Phi => "phi",
        Group::Lam => "lam",
        Group::W => "w",
        Group::Net => "net",
    }
}

/// One line per parameter group: `name v0 v1 …`. Values round-trip exactly.
pub fn params_text(policy: &dyn Policy) -> String {
    let theta = policy.params();
    let mut out = String::from("# qpolicy parameters v1\n");
    for (g, r) in policy.groups() {
        out.push_str(group_name(g));
        for v in &theta[r] {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn load_params(policy: &mut dyn Policy, text: &str) -> Result<()> {
    let bad = |m: String| Error::Config(format!("parameter file: {m}"));
    let mut theta = policy.params();
    let groups = policy.groups();
    let mut seen = vec![false; groups.len()];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let gi = groups.iter().position(|(g, _)| group_name(*g) == name).ok_or_else(|| bad(format!("unknown group {name:?}")))?;
        let values: Vec<f64> = parts.map(|t| t.parse().map_err(|_| bad(format!("bad number {t:?}")))).collect::<Result<_>>()?;
        let range = groups[gi].1.clone();
        if values.len() != range.len() {
            return Err(bad(format!("group {name} needs {} values, got {}", range.len(), values.len())));
        }
        theta[range].copy_from_slice(&values);
        seen[gi] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(bad(format!("group {} missing", group_name(groups[i].0))));
    }
    policy.set_params(&theta)
}

/// Mean moving-average curve with a ±1 std band and thin per-run curves.
pub fn learning_curve_svg(title: &str, runs: &[Vec<RunRow>], agg: &[AggregateRow]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const PAD: f64 = 56.0;
    let n = agg.len().max(2) as f64;
    let values = runs
        .iter()
        .flatten()
        .map(|r| r.moving_avg)
        .chain(agg.iter().flat_map(|a| [a.moving_avg_mean - a.moving_avg_std, a.moving_avg_mean + a.moving_avg_std]));
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1.0);
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let path =
        |pts: &mut dyn Iterator<Item = (f64, f64)>| pts.map(|(a, b)| format!("{a:.2},{b:.2}")).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    )
    .unwrap();
    let upper = agg.iter().enumerate().map(|(i, a)| (x(i), y(a.moving_avg_mean + a.moving_avg_std)));
    let lower = agg.iter().enumerate().rev().map(|(i, a)| (x(i), y(a.moving_avg_mean - a.moving_avg_std)));
    writeln!(s, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##, path(&mut upper.chain(lower)))
        .unwrap();
    for run in runs {
        let pts = run.iter().enumerate().map(|(i, r)| (x(i), y(r.moving_avg)));
        writeln!(s, r##"<polyline points="{}" fill="none" stroke="#888" stroke-width="0.6"/>"##, path(&mut pts.take(agg.len())))
            .unwrap();
    }
    let mean = agg.iter().enumerate().map(|(i, a)| (x(i), y(a.moving_avg_mean)));
    writeln!(s, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.8"/>"##, path(&mut mean.into_iter()))
        .unwrap();
    // axes and labels
    writeln!(s, r#"<line x1="{PAD}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - PAD, W - PAD).unwrap();
    writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD).unwrap();
    for (v, anchor_y) in [(lo, H - PAD), (hi, PAD)] {
        writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            PAD - 6.0,
            anchor_y + 4.0,
            tick(v)
        )
        .unwrap();
    }
    let last = agg.last().map_or(0, |a| a.episode);
    writeln!(s, r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">0</text>"#, H - PAD + 16.0).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{last}</text>"#,
        W - PAD,
        H - PAD + 16.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">episode</text>"#,
        W / 2.0,
        H - 14.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{0}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0})">return (moving average over {MOVING_AVERAGE_WINDOW})</text>"#,
        H / 2.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use qpolicy::train::MlpPolicy;

    fn rows(seed: u64, rets: &[f64]) -> Vec<RunRow> {
        rets.iter()
            .enumerate()
            .map(|(i, &r)| RunRow { seed, episode: i, ret: r, moving_avg: r, beta: None, wall_ms: 0 })
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        let agg = aggregate(&[rows(0, &[1.0, 2.0, 9.0]), rows(1, &[3.0, 2.0])]);
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].return_mean, agg[0].n_seeds), (2.0, 2));
        assert!((agg[0].return_std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg[1].return_std, 0.0);
    }

    #[test]
    fn single_run_has_zero_spread() {
        let agg = aggregate(&[rows(0, &[4.0, 5.0])]);
        assert_eq!(agg.iter().map(|a| a.return_std).collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = qpolicy::rng_from_seed(3);
        let net = MlpPolicy::with_shape(3, 2, 4, 2, &mut rng).unwrap();
        let text = params_text(&net);
        let mut other = MlpPolicy::zeros(vec![3, 4, 4, 2]).unwrap();
        load_params(&mut other, &text).unwrap();
        assert_eq!(other.params(), net.params());
        assert!(load_params(&mut other, "net 1 2 3").is_err());
        assert!(load_params(&mut other, "phi 1").is_err());
        assert!(load_params(&mut other, "").is_err());
    }

    #[test]
    fn svg_is_well_formed() {
        let runs = vec![rows(0, &[1.0, 2.0, 3.0]), rows(1, &[0.0, 2.0, 5.0])];
        let svg = learning_curve_svg("a < b", &runs, &aggregate(&runs));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
}

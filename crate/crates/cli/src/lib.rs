//! Verification suites and report output for the `naheat` command.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use naheat::stratified_group::GroupDescriptor;
use naheat::Error;
use serde::Serialize;
use serde_json::Value;

pub mod suites;

pub const SUITES: [&str; 5] = ["geometry", "subordination", "heat", "estimates", "riesz"];

/// Settings shared by all checks of a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub group: GroupDescriptor,
    pub suite: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub epsilon: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Multiplies node counts of G-quadratures in the estimate checks.
    pub node_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            group: GroupDescriptor::abelian(1).expect("Q = 1"),
            suite: "all".into(),
            seed: 7,
            out: None,
            epsilon: 0.25,
            t_min: 4.0,
            t_max: 64.0,
            node_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub id: String,
    pub status: Status,
    pub summary: String,
    pub detail: Value,
    /// (t, value, est_abs_error) rows for the CSV output.
    #[serde(skip)]
    pub series: Vec<(f64, f64, f64)>,
}

impl CheckRecord {
    pub fn new(id: &str, passed: bool, summary: impl Into<String>, detail: Value) -> Self {
        CheckRecord {
            id: id.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            summary: summary.into(),
            detail,
            series: Vec::new(),
        }
    }

    pub fn skip(id: &str, why: impl Into<String>) -> Self {
        CheckRecord { id: id.into(), status: Status::Skip, summary: why.into(), detail: Value::Null, series: Vec::new() }
    }

    pub fn failed(id: &str, err: &Error) -> Self {
        CheckRecord::new(id, false, format!("error: {err}"), Value::Null)
    }

    pub fn with_series(mut self, s: Vec<(f64, f64, f64)>) -> Self {
        self.series = s;
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Runs a suite (or `all`) and returns its records sorted by id.
pub fn run(cfg: &RunConfig) -> Result<Vec<CheckRecord>, Error> {
    let names: Vec<&str> = if cfg.suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&cfg.suite.as_str()) {
        vec![cfg.suite.as_str()]
    } else {
        return Err(Error::InvalidParameter(format!("unknown suite '{}'", cfg.suite)));
    };
    if !(cfg.t_min > 0.0 && cfg.t_max > cfg.t_min) {
        return Err(Error::InvalidParameter("need 0 < t-min < t-max".into()));
    }
    let mut out = Vec::new();
    for n in names {
        out.extend(match n {
            "geometry" => suites::geometry(cfg),
            "subordination" => suites::subordination(cfg),
            "heat" => suites::heat(cfg),
            "estimates" => suites::estimates(cfg),
            _ => suites::riesz(cfg),
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Fixed-width summary table.
pub fn summary_table(records: &[CheckRecord]) -> String {
    let w = records.iter().map(|r| r.id.len()).max().unwrap_or(2).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<w$}  {:<6}  summary", "check", "status");
    for r in records {
        let st = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skip => "skip",
        };
        let _ = writeln!(s, "{:<w$}  {:<6}  {}", r.id, st, r.summary);
    }
    let failed = records.iter().filter(|r| r.status == Status::Fail).count();
    let skipped = records.iter().filter(|r| r.status == Status::Skip).count();
    let _ = writeln!(s, "{} checks, {} failed, {} skipped", records.len(), failed, skipped);
    s
}

/// Writes `report.jsonl` and one `<id>.csv` per record with a series.
pub fn write_reports(dir: &Path, records: &[CheckRecord]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("report.jsonl"))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    for r in records.iter().filter(|r| !r.series.is_empty()) {
        write_csv(&dir.join(format!("{}.csv", r.id)), &r.series)?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[(f64, f64, f64)]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t,value,est_abs_error")?;
    for (t, v, e) in rows {
        writeln!(f, "{t:e},{v:e},{e:e}")?;
    }
    Ok(())
}

/// Exit code for a library error: 2 for bad input, 3 for an unsupported regime.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => 2,
        Error::UnsupportedRegime(_) => 3,
        Error::Quadrature(_) => 1,
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, Error> {
    let mut m = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected key = value", i + 1)))?;
        m.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(m)
}

/// Powers of two in [a, b].
pub fn dyadic_grid(a: f64, b: f64) -> Vec<f64> {
    let lo = a.log2().ceil() as i32;
    let hi = b.log2().floor() as i32;
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

//! Run output files: metrics table, flow dumps, summary and manifest.
//!
//! Byte formats are documented in `docs/output-format.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{MetricsRecord, Simulation};
use crate::flow::flow_records;
use crate::num::{render_rational, Energy};
use crate::par::ExecMode;
use crate::scenario::Scenario;
use crate::stats::{summarize, StatsError, Summary};

pub const METRICS_FILE: &str = "metrics.csv";
pub const FLOWS_FILE: &str = "flows.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("incomplete run in {0}: {1}")]
    Incomplete(PathBuf, String),
    #[error("{file} does not match the checksum in the manifest")]
    Checksum { file: String },
    #[error("malformed {file} at line {line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub seed: u64,
    pub iterations: u64,
    pub out_dir: String,
    /// File name to lowercase hex SHA-256.
    pub checksums: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub max_feedback_rounds: Option<u32>,
    pub epsilon: Option<Rational64>,
    pub mode: ExecMode,
}

impl RunOptions {
    /// The scenario with command-line overrides applied.
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        if let Some(seed) = self.seed {
            s.config.seed = seed;
        }
        if let Some(n) = self.iterations {
            s.config.iterations = n;
        }
        if let Some(r) = self.max_feedback_rounds {
            s.config.max_feedback_rounds = r;
        }
        if let Some(e) = self.epsilon {
            s.config.epsilon = e;
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_rat(v: Option<Rational64>) -> String {
    v.map(|x| render_rational(&x)).unwrap_or_default()
}

pub fn metrics_header(scenario: &Scenario) -> String {
    let mut cols = vec!["iteration".to_string(), "goal".into(), "consumption".into()];
    for m in &scenario.microgrids {
        for h in &m.houses {
            cols.push(format!("{}.{}", m.id, h.id));
        }
    }
    cols.extend(
        [
            "feedback_rounds",
            "flow_cost",
            "consensus",
            "tracking_error",
        ]
        .map(String::from),
    );
    cols.join(",")
}

pub fn metrics_row(r: &MetricsRecord) -> String {
    let mut row = format!("{},{},{}", r.iteration, opt(r.goal), r.consumption);
    for c in &r.house_consumption {
        let _ = write!(row, ",{c}");
    }
    let _ = write!(
        row,
        ",{},{},{},{}",
        r.feedback_rounds,
        render_rational(&r.flow_cost),
        r.consensus,
        opt(r.tracking_error)
    );
    row
}

pub fn summary_csv(s: &Summary) -> String {
    format!(
        "samples,mean,min,max,mean_goal,relative_error,in_band,band_fraction\n{},{},{},{},{},{},{},{}\n",
        s.samples,
        render_rational(&s.mean),
        s.min,
        s.max,
        opt_rat(s.mean_goal),
        opt_rat(s.relative_error),
        s.in_band,
        opt_rat(s.band_fraction)
    )
}

/// Human-readable summary, as printed by `gridsim report`.
pub fn format_summary(s: &Summary) -> String {
    let f = |r: &Rational64| *r.numer() as f64 / *r.denom() as f64;
    let mut out = format!(
        "samples: {}\nmean consumption: {} ({:.3})\nmin: {}\nmax: {}\n",
        s.samples,
        render_rational(&s.mean),
        f(&s.mean),
        s.min,
        s.max
    );
    if let Some(g) = s.mean_goal {
        let _ = writeln!(out, "mean goal: {}", render_rational(&g));
    }
    if let Some(e) = s.relative_error {
        let _ = writeln!(out, "mean error: {:.2}%", 100.0 * f(&e));
    }
    if let Some(b) = s.band_fraction {
        let _ = writeln!(
            out,
            "within +/-5% of goal: {}/{} ({:.2}%)",
            s.in_band,
            s.samples,
            100.0 * f(&b)
        );
    }
    out
}

/// Runs the scenario and writes every output file into `out_dir`.
pub fn run_to_dir(
    scenario_label: &str,
    scenario: &Scenario,
    options: &RunOptions,
    out_dir: &Path,
) -> Result<RunManifest, ReportError> {
    let scenario = options.apply(scenario);
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut metrics = metrics_header(&scenario);
    metrics.push('\n');
    let mut flows = String::from("iteration,from,to,tier,flow,cost\n");
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut sim = Simulation::with_mode(&scenario, options.mode);
    for _ in 0..scenario.config.iterations {
        let report = sim.step();
        let r = &report.metrics;
        metrics.push_str(&metrics_row(r));
        metrics.push('\n');
        for rec in flow_records(&report.graph, &report.flow) {
            let _ = writeln!(
                flows,
                "{},{},{},{},{},{}",
                r.iteration,
                rec.from,
                rec.to,
                opt(rec.tier),
                rec.flow,
                render_rational(&rec.cost)
            );
        }
        if !r.consensus {
            warnings.push(format!(
                "iteration {}: no consensus after {} feedback rounds",
                r.iteration, r.feedback_rounds
            ));
        }
        if !report.plan.is_feasible() {
            warnings.push(format!(
                "iteration {}: production plan misses demand by {}",
                r.iteration, report.plan.unmet
            ));
        }
        records.push(r.clone());
    }
    let samples: Vec<(Energy, Option<Energy>)> =
        records.iter().map(|r| (r.consumption, r.goal)).collect();
    let summary = summarize(&samples)?;

    let mut checksums = BTreeMap::new();
    for (name, body) in [
        (METRICS_FILE, &metrics),
        (FLOWS_FILE, &flows),
        (SUMMARY_FILE, &summary_csv(&summary)),
    ] {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        checksums.insert(name.to_string(), sha256_hex(body.as_bytes()));
    }
    let manifest = RunManifest {
        scenario: scenario_label.to_string(),
        seed: scenario.config.seed,
        iterations: scenario.config.iterations,
        out_dir: out_dir.display().to_string(),
        checksums,
        warnings,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Reads a finished run back, checks it against its manifest and
/// recomputes the summary from the metrics table.
pub fn report_dir(out_dir: &Path) -> Result<(RunManifest, Summary), ReportError> {
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(ReportError::Incomplete(
            out_dir.to_path_buf(),
            format!("{MANIFEST_FILE} is missing"),
        ));
    }
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| ReportError::Malformed {
            file: MANIFEST_FILE.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
    for name in [METRICS_FILE, FLOWS_FILE, SUMMARY_FILE] {
        let path = out_dir.join(name);
        let Some(expected) = manifest.checksums.get(name) else {
            return Err(ReportError::Incomplete(
                out_dir.to_path_buf(),
                format!("manifest lists no checksum for {name}"),
            ));
        };
        let bytes = fs::read(&path).map_err(|_| {
            ReportError::Incomplete(out_dir.to_path_buf(), format!("{name} is missing"))
        })?;
        if &sha256_hex(&bytes) != expected {
            return Err(ReportError::Checksum { file: name.into() });
        }
    }
    let metrics_path = out_dir.join(METRICS_FILE);
    let metrics = fs::read_to_string(&metrics_path).map_err(io_err(&metrics_path))?;
    let samples = parse_metrics(&metrics)?;
    if samples.is_empty() {
        return Err(ReportError::Incomplete(
            out_dir.to_path_buf(),
            format!("{METRICS_FILE} has no rows"),
        ));
    }
    Ok((manifest, summarize(&samples)?))
}

fn parse_metrics(text: &str) -> Result<Vec<(Energy, Option<Energy>)>, ReportError> {
    let bad = |line: usize, message: String| ReportError::Malformed {
        file: METRICS_FILE.into(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?
        .split(',')
        .collect();
    let goal_col = header
        .iter()
        .position(|&c| c == "goal")
        .ok_or_else(|| bad(1, "no goal column".into()))?;
    let cons_col = header
        .iter()
        .position(|&c| c == "consumption")
        .ok_or_else(|| bad(1, "no consumption column".into()))?;
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != header.len() {
                return Err(bad(
                    i + 2,
                    format!("expected {} fields, found {}", header.len(), cols.len()),
                ));
            }
            let consumption = cols[cons_col]
                .parse()
                .map_err(|e| bad(i + 2, format!("consumption: {e}")))?;
            let goal = match cols[goal_col] {
                "" => None,
                g => Some(g.parse().map_err(|e| bad(i + 2, format!("goal: {e}")))?),
            };
            Ok((consumption, goal))
        })
        .collect()
}

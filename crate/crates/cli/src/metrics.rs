//! Per-run metrics files: one JSON object per line, appended and flushed as
//! each round finishes.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, Method};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLine {
    pub run: usize,
    pub round: usize,
    pub pseudo_loss: f64,
    pub raw_pseudo_loss: f64,
    pub beta: f64,
    pub alpha: f64,
    pub resample_seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub layers: usize,
    pub valid_errors: Vec<f64>,
    /// Jaccard similarity of this round's resample with the previous one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jaccard: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalLine {
    pub run: usize,
    pub test_error: f64,
    /// Test error of each member on its own.
    pub member_test_errors: Vec<f64>,
    pub rounds: usize,
    pub total_epochs: usize,
    pub final_best_epoch: usize,
    /// Consecutive-round Jaccard similarities, in round order.
    pub jaccard: Vec<f64>,
    pub total_wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricsLine {
    Config { run: usize, seed: u64, method: Method, config: Box<ExperimentConfig> },
    Round(RoundLine),
    Final(FinalLine),
    Failed { run: usize, round: usize, error: String },
}

/// Everything recorded about one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub run: usize,
    pub seed: u64,
    pub method: Method,
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundLine>,
    pub result: Option<FinalLine>,
    pub failure: Option<(usize, String)>,
}

impl MetricsRecord {
    pub fn is_complete(&self) -> bool {
        self.result.is_some()
    }
}

/// File stem shared by a run's metrics and model.
pub fn run_stem(method: Method, run: usize) -> String {
    format!("{}-run{run:03}", method.as_str())
}

pub fn metrics_path(dir: &Path, method: Method, run: usize) -> PathBuf {
    dir.join(format!("{}.jsonl", run_stem(method, run)))
}

/// Append-only writer; every line is flushed before `append` returns.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Starts a fresh file, replacing any previous one.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(MetricsWriter { file })
    }

    pub fn append(&mut self, line: &MetricsLine) -> std::io::Result<()> {
        let mut text = serde_json::to_string(line).map_err(std::io::Error::other)?;
        text.push('\n');
        self.file.write_all(text.as_bytes())?;
        self.file.flush()
    }
}

/// Parses one metrics file. A torn final line (from a killed process) is
/// ignored; a malformed line anywhere else is an error.
pub fn read_record(path: &Path) -> Result<Option<MetricsRecord>, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let lines: Vec<String> =
        BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| format!("{}: {e}", path.display()))?;
    let mut record: Option<MetricsRecord> = None;
    let last = lines.len().saturating_sub(1);
    for (i, text) in lines.iter().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        let line: MetricsLine = match serde_json::from_str(text) {
            Ok(l) => l,
            Err(_) if i == last => {
                log::warn!("{}: ignoring incomplete last line", path.display());
                break;
            }
            Err(e) => return Err(format!("{}:{}: {e}", path.display(), i + 1)),
        };
        match line {
            MetricsLine::Config { run, seed, method, config } => {
                record = Some(MetricsRecord {
                    run,
                    seed,
                    method,
                    config: *config,
                    rounds: vec![],
                    result: None,
                    failure: None,
                })
            }
            other => {
                let rec =
                    record.as_mut().ok_or_else(|| format!("{}: records before the config line", path.display()))?;
                match other {
                    MetricsLine::Round(r) => rec.rounds.push(r),
                    MetricsLine::Final(f) => rec.result = Some(f),
                    MetricsLine::Failed { round, error, .. } => rec.failure = Some((round, error)),
                    MetricsLine::Config { .. } => unreachable!(),
                }
            }
        }
    }
    Ok(record)
}

/// All records in `dir`, sorted by method and run.
pub fn read_records(dir: &Path) -> Result<Vec<MetricsRecord>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut records = Vec::new();
    for p in paths {
        if let Some(r) = read_record(&p)? {
            records.push(r);
        }
    }
    records.sort_by_key(|r| (r.method, r.run));
    Ok(records)
}

fn strip_wall_times(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("wall_time_secs"));
            map.values_mut().for_each(strip_wall_times);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_times),
        _ => {}
    }
}

/// The file's lines with every wall-clock field removed, for determinism
/// comparisons.
pub fn timeless_lines(path: &Path) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display()))?;
            strip_wall_times(&mut v);
            Ok(v.to_string())
        })
        .collect()
}

/// Flat CSV export: one row per round of every record.
pub fn write_rounds_csv(records: &[MetricsRecord], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "run",
        "seed",
        "round",
        "pseudo_loss",
        "beta",
        "alpha",
        "epochs",
        "best_epoch",
        "layers",
        "jaccard",
        "wall_time_secs",
        "test_error",
    ])?;
    for rec in records {
        for r in &rec.rounds {
            let test = rec.result.as_ref().filter(|_| r.round + 1 == rec.rounds.len());
            w.write_record([
                rec.method.to_string(),
                rec.run.to_string(),
                rec.seed.to_string(),
                r.round.to_string(),
                r.pseudo_loss.to_string(),
                r.beta.to_string(),
                r.alpha.to_string(),
                r.epochs.to_string(),
                r.best_epoch.to_string(),
                r.layers.to_string(),
                r.jaccard.map(|j| j.to_string()).unwrap_or_default(),
                r.wall_time_secs.to_string(),
                test.map(|f| f.test_error.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

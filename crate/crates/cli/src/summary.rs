//! Per-method comparison tables over a directory of finished runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::Method;
use crate::metrics::{read_records, MetricsRecord};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_error: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_error: f64,
    pub mean_time_secs: f64,
    pub mean_best_epoch: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Groups finished records by method. Unfinished runs are skipped.
pub fn summarize_records(records: &[MetricsRecord]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<Method, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_complete()) {
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, recs)| {
            let finals: Vec<_> = recs.iter().filter_map(|r| r.result.as_ref()).collect();
            let errors: Vec<f64> = finals.iter().map(|f| f.test_error).collect();
            let times: Vec<f64> = finals.iter().map(|f| f.total_wall_time_secs).collect();
            let epochs: Vec<f64> = finals.iter().map(|f| f.final_best_epoch as f64).collect();
            MethodSummary {
                method,
                runs: finals.len(),
                mean_error: mean(&errors),
                std_error: sample_std(&errors),
                mean_time_secs: mean(&times),
                mean_best_epoch: mean(&epochs),
            }
        })
        .collect()
}

/// Summaries of every method with at least one finished run in `dir`.
pub fn summarize(dir: &Path) -> Result<Vec<MethodSummary>, String> {
    let records = read_records(dir)?;
    let rows = summarize_records(&records);
    if rows.is_empty() {
        return Err(format!("no finished runs in {}", dir.display()));
    }
    Ok(rows)
}

pub fn render_table(rows: &[MethodSummary]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>5} {:>11} {:>10} {:>13} {:>15}",
        "method", "runs", "mean error", "std", "mean time (s)", "mean best epoch"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<12} {:>5} {:>10.4}% {:>9.4}% {:>13.1} {:>15.2}",
            r.method.as_str(),
            r.runs,
            100.0 * r.mean_error,
            100.0 * r.std_error,
            r.mean_time_secs,
            r.mean_best_epoch
        )
        .unwrap();
    }
    out
}

/// Full-precision CSV: `method,runs,mean_error,std_error,mean_time_secs,mean_best_epoch`.
pub fn write_csv<W: std::io::Write>(rows: &[MethodSummary], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SearchRecord, SearchReport};
use crate::autoencoder::Embedding;
use crate::error::{Error, Result};
use crate::kernel::params::write_atomic;

pub const CSV_HEADER: [&str; 7] = ["iter", "arch_json", "reward", "baseline", "advantage", "grad_norm", "wall_ms"];

/// Writes the per-iteration log; floats use the shortest representation that
/// parses back to the same value.
pub fn write_records_csv(path: &Path, records: &[SearchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.arch_json.clone(),
            r.reward.to_string(),
            r.baseline.to_string(),
            r.advantage.to_string(),
            r.grad_norm.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> Result<T> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad `{}` field in records.csv", CSV_HEADER[i])))
}

/// Reads `records.csv`; embeddings and error messages are not part of the
/// CSV and come back empty.
pub fn read_records_csv(path: &Path) -> Result<Vec<SearchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Format("records.csv has unexpected columns".into()));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        out.push(SearchRecord {
            iter: field(&row, 0)?,
            arch_json: row[1].to_string(),
            reward: field(&row, 2)?,
            baseline: field(&row, 3)?,
            advantage: field(&row, 4)?,
            grad_norm: field(&row, 5)?,
            wall_ms: field(&row, 6)?,
            embedding: Embedding(Vec::new()),
            error: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub best_reward: f64,
    pub best_iter: usize,
    pub best_arch: String,
    pub mean_reward: f64,
    pub distinct_architectures: usize,
    pub failed_evaluations: usize,
    pub initial_arch: String,
    pub final_accuracy: Option<f64>,
    pub final_param_count: Option<usize>,
}

impl RunSummary {
    pub fn from_report(report: &SearchReport) -> Self {
        let n = report.records.len();
        let distinct: BTreeSet<&str> = report.records.iter().map(|r| r.arch_json.as_str()).collect();
        RunSummary {
            iterations: n,
            best_reward: report.best_reward,
            best_iter: report.best_iter,
            best_arch: report.best_arch.clone(),
            mean_reward: report.records.iter().map(|r| r.reward).sum::<f64>() / n.max(1) as f64,
            distinct_architectures: distinct.len(),
            failed_evaluations: report.failed_evaluations,
            initial_arch: report.initial_arch.clone(),
            final_accuracy: report.final_result.as_ref().map(|r| r.value),
            final_param_count: report.final_result.as_ref().map(|r| r.meta.param_count),
        }
    }
}

/// Writes `summary.json` and `best_so_far.csv` next to the run's report and
/// returns the summary.
pub fn render_summary(dir: &Path) -> Result<RunSummary> {
    let report = super::load_report(dir)?;
    let summary = RunSummary::from_report(&report);
    write_atomic(&dir.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "reward", "best_so_far"])?;
    for (r, best) in report.records.iter().zip(report.best_so_far()) {
        w.write_record([r.iter.to_string(), r.reward.to_string(), best.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.join("best_so_far.csv"), &bytes)?;
    Ok(summary)
}

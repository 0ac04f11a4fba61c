use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Method, TrainError};
use crate::advantage::Gamma;

/// One evaluated iteration. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based; the row describes the policy after this many updates.
    pub iteration: usize,
    pub method: Method,
    pub gamma: Gamma,
    pub mc_samples: usize,
    pub seed: u64,
    /// Exact expected return `V_0` from `d_0`.
    pub value: f64,
    /// Exact success probability; empty when rewards are not terminal-only.
    pub success: Option<f64>,
    /// `(1/t) Σ_{τ≤t} (V*_0 − V^{π_τ}_0)`.
    pub regret: f64,
    /// Objective value at the last gradient step of the iteration.
    pub loss: Option<f64>,
}

/// Running average of the per-iteration value gap to the optimum.
#[derive(Debug, Clone)]
pub struct RegretTracker {
    optimal: f64,
    total: f64,
    count: usize,
}

impl RegretTracker {
    pub fn new(optimal_value: f64) -> Self {
        Self {
            optimal: optimal_value,
            total: 0.0,
            count: 0,
        }
    }

    /// Adds one iterate's value and returns the running average regret. Gaps
    /// below zero are rounding and are clamped.
    pub fn push(&mut self, value: f64) -> f64 {
        self.total += (self.optimal - value).max(0.0);
        self.count += 1;
        self.current()
    }

    pub fn current(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        }
    }
}

/// Metrics as CSV text with a header row.
pub fn metrics_to_csv(history: &[MetricsRecord]) -> Result<String, TrainError> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if history.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    }
    for r in history {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| TrainError::Report(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses CSV produced by [`metrics_to_csv`].
pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRecord>, TrainError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(TrainError::Report(format!(
            "unexpected CSV header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Writes the metrics CSV atomically.
pub fn write_metrics_csv(path: &Path, history: &[MetricsRecord]) -> Result<(), TrainError> {
    let text = metrics_to_csv(history)?;
    crate::io::write_atomic(path, text.as_bytes()).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })?;
    metrics_from_csv(&text)
}

/// Column order of the metrics CSV.
pub const CSV_COLUMNS: [&str; 9] = [
    "iteration",
    "method",
    "gamma",
    "mc_samples",
    "seed",
    "value",
    "success",
    "regret",
    "loss",
];

fn csv_error(e: csv::Error) -> TrainError {
    TrainError::Report(e.to_string())
}

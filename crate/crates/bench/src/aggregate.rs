//! Per-cell summaries of experiment rows.

use std::collections::BTreeMap;

use crate::config::{Experiment, Method};
use crate::experiment::ResultRow;

pub const SUMMARY_HEADER: &str = "experiment,method,sweep_value,n,failures,nmse_mean,nmse_stderr,f_mean,f_stderr";

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub experiment: Experiment,
    pub method: Method,
    pub sweep_value: f64,
    /// Successful rows.
    pub n: usize,
    pub failures: usize,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    pub f_mean: f64,
    pub f_stderr: f64,
}

impl CellSummary {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment.name(),
            self.method,
            self.sweep_value,
            self.n,
            self.failures,
            self.nmse_mean,
            self.nmse_stderr,
            self.f_mean,
            self.f_stderr
        )
    }
}

/// Mean and standard error (sample standard deviation over `√n`); the
/// standard error of a single value is 0.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One summary per (experiment, method, sweep value). Failed rows are counted
/// but excluded from the means; a cell with no successful row is dropped with
/// a warning.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(Experiment, Method, u64), (f64, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        // Key on the bit pattern so equal sweep values group together; the
        // map is re-sorted numerically below.
        cells
            .entry((r.experiment, r.method, r.sweep_value.to_bits()))
            .or_insert_with(|| (r.sweep_value, Vec::new()))
            .1
            .push(r);
    }
    let mut out = Vec::new();
    for ((experiment, method, _), (sweep_value, rs)) in cells {
        let ok: Vec<&&ResultRow> = rs.iter().filter(|r| !r.failed()).collect();
        let failures = rs.len() - ok.len();
        if ok.is_empty() {
            log::warn!(
                "{} {method} at {sweep_value}: all {failures} runs failed; cell omitted",
                experiment.name()
            );
            continue;
        }
        let nmse: Vec<f64> = ok.iter().map(|r| r.nmse).collect();
        let f: Vec<f64> = ok.iter().map(|r| r.f_measure).collect();
        let (nmse_mean, nmse_stderr) = mean_stderr(&nmse);
        let (f_mean, f_stderr) = mean_stderr(&f);
        out.push(CellSummary {
            experiment,
            method,
            sweep_value,
            n: ok.len(),
            failures,
            nmse_mean,
            nmse_stderr,
            f_mean,
            f_stderr,
        });
    }
    out.sort_by(|a, b| {
        (a.experiment, a.method)
            .cmp(&(b.experiment, b.method))
            .then(a.sweep_value.total_cmp(&b.sweep_value))
    });
    out
}

/// The summary for one cell, if present.
pub fn find(summary: &[CellSummary], method: Method, sweep_value: f64) -> Option<&CellSummary> {
    summary
        .iter()
        .find(|c| c.method == method && (c.sweep_value - sweep_value).abs() < 1e-12)
}

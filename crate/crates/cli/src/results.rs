//! The long-form results CSV: one row per (run, period), appended across
//! invocations, plus aggregation into report tables.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use driftbench_core::harness::RunResult;
use driftbench_core::report::{ReportRow, ReportTable};

pub const RESULTS_HEADER: &str = "dataset,method,features,seed,period,n_samples,mae,rmse";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub features: String,
    pub seed: u64,
    pub period: String,
    pub n_samples: usize,
    pub mae: f64,
    pub rmse: f64,
}

/// Flatten a run into one row per period.
pub fn rows_from_run(dataset: &str, result: &RunResult) -> Vec<ResultRow> {
    result
        .periods
        .iter()
        .map(|p| ResultRow {
            dataset: dataset.to_string(),
            method: result.method.as_str().to_string(),
            features: result.features.clone(),
            seed: result.seed,
            period: p.name.clone(),
            n_samples: p.n,
            mae: p.mae,
            rmse: p.rmse,
        })
        .collect()
}

/// Append rows, writing the header first when the file is new or empty.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("open results file {}", path.display()))?;
    if need_header {
        writeln!(file, "{RESULTS_HEADER}")?;
    }
    for r in rows {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            r.dataset, r.method, r.features, r.seed, r.period, r.n_samples, r.mae, r.rmse
        )?;
    }
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("read results file {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        other => bail!("unexpected results header {:?}", other),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            bail!("malformed results row '{line}'");
        }
        rows.push(ResultRow {
            dataset: parts[0].to_string(),
            method: parts[1].to_string(),
            features: parts[2].to_string(),
            seed: parts[3].parse().with_context(|| format!("bad seed in '{line}'"))?,
            period: parts[4].to_string(),
            n_samples: parts[5].parse().with_context(|| format!("bad count in '{line}'"))?,
            mae: parts[6].parse().with_context(|| format!("bad mae in '{line}'"))?,
            rmse: parts[7].parse().with_context(|| format!("bad rmse in '{line}'"))?,
        });
    }
    Ok(rows)
}

/// Mean MAE over seeds per (dataset, method, features) × period. Period
/// columns keep first-appearance order; every group must cover every period.
pub fn aggregate_table(rows: &[ResultRow]) -> Result<ReportTable> {
    let mut periods: Vec<String> = Vec::new();
    for r in rows {
        if !periods.contains(&r.period) {
            periods.push(r.period.clone());
        }
    }
    let mut groups: BTreeMap<(String, String, String), BTreeMap<String, Vec<f64>>> =
        BTreeMap::new();
    for r in rows {
        groups
            .entry((r.dataset.clone(), r.method.clone(), r.features.clone()))
            .or_default()
            .entry(r.period.clone())
            .or_default()
            .push(r.mae);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((dataset, method, features), by_period) in groups {
        let mut cells = Vec::with_capacity(periods.len());
        for p in &periods {
            let maes = by_period.get(p).ok_or_else(|| {
                anyhow::anyhow!("({dataset}, {method}, {features}) has no rows for period '{p}'")
            })?;
            cells.push(maes.iter().sum::<f64>() / maes.len() as f64);
        }
        out.push(ReportRow { dataset, method, features, cells });
    }
    Ok(ReportTable::new(periods, out)?)
}

//! Error metrics, period-ranking and improvement-table arithmetic, and
//! deterministic table emission.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::{Error, Result};

/// Mean absolute error.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput("mae over empty series".to_string()));
    }
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(format!("mae: {} vs {}", y.len(), yhat.len())));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| fmath::abs(a - b)).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput("rmse over empty series".to_string()));
    }
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(format!("rmse: {} vs {}", y.len(), yhat.len())));
    }
    let ms = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(fmath::sqrt(ms))
}

/// Dense ascending ranks of a MAE row (1 = lowest error); ties share the
/// average of their rank positions.
pub fn rank_periods(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("finite cells"));
    let mut ranks = alloc::vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Column means of [`rank_periods`] applied to each row of a rectangular
/// MAE matrix.
pub fn average_ranks(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let width = rows
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::EmptyInput("rank table".to_string()))?;
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::LengthMismatch("ragged rank table".to_string()));
    }
    let mut sums = alloc::vec![0.0; width];
    for row in rows {
        for (s, r) in sums.iter_mut().zip(rank_periods(row)) {
            *s += r;
        }
    }
    for s in &mut sums {
        *s /= rows.len() as f64;
    }
    Ok(sums)
}

/// Percent improvement of the best method over the second best:
/// `100·(second − best)/second`. Negative when "best" is actually worse.
pub fn improvement_pct(best_mae: f64, second_mae: f64) -> Result<f64> {
    if second_mae <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "improvement denominator must be positive, got {second_mae}"
        )));
    }
    Ok(100.0 * (second_mae - best_mae) / second_mae)
}

/// Integer display rounding, half away from zero.
pub fn round_percent(pct: f64) -> i64 {
    fmath::round(pct) as i64
}

/// Round to `decimals` places, half away from zero.
pub fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = libm::pow(10.0, decimals as f64);
    fmath::round(x * scale) / scale
}

/// Improvement from adding mobility features: `(e − em, 100·(e − em)/e)`.
/// Display convention is 4 decimals for the delta and 2 for the percent.
pub fn mobility_delta(e_mae: f64, em_mae: f64) -> Result<(f64, f64)> {
    if e_mae <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "mobility baseline must be positive, got {e_mae}"
        )));
    }
    let delta = e_mae - em_mae;
    Ok((delta, 100.0 * delta / e_mae))
}

/// One table row keyed by dataset, method, and feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub features: String,
    pub cells: Vec<f64>,
}

/// Rectangular MAE table: one column per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub periods: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn new(periods: Vec<String>, rows: Vec<ReportRow>) -> Result<Self> {
        for row in &rows {
            if row.cells.len() != periods.len() {
                return Err(Error::LengthMismatch(format!(
                    "row ({}, {}, {}) has {} cells for {} periods",
                    row.dataset,
                    row.method,
                    row.features,
                    row.cells.len(),
                    periods.len()
                )));
            }
            if row.cells.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::NonFinite(format!(
                    "cell in row ({}, {}, {})",
                    row.dataset, row.method, row.features
                )));
            }
        }
        Ok(Self { periods, rows })
    }

    /// Rows sorted ascending by the PLD column (first column when no period
    /// is named PLD), then by key for determinism.
    fn sorted_rows(&self) -> Vec<&ReportRow> {
        let sort_col = self.periods.iter().position(|p| p == "PLD").unwrap_or(0);
        let mut rows: Vec<&ReportRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            a.cells[sort_col]
                .partial_cmp(&b.cells[sort_col])
                .expect("finite cells")
                .then_with(|| {
                    (&a.dataset, &a.method, &a.features).cmp(&(&b.dataset, &b.method, &b.features))
                })
        });
        rows
    }

    /// CSV form: `dataset,method,features,<period…>` header plus one line
    /// per row in display order.
    pub fn emit_csv(&self) -> String {
        let mut out = String::from("dataset,method,features");
        for p in &self.periods {
            out.push(',');
            out.push_str(p);
        }
        out.push('\n');
        for row in self.sorted_rows() {
            out.push_str(&format!("{},{},{}", row.dataset, row.method, row.features));
            for c in &row.cells {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }

    /// Markdown pipe table in the same display order.
    pub fn emit_markdown(&self) -> String {
        let mut out = String::from("| dataset | method | features |");
        for p in &self.periods {
            out.push_str(&format!(" {p} |"));
        }
        out.push('\n');
        out.push_str("|---|---|---|");
        for _ in &self.periods {
            out.push_str("---|");
        }
        out.push('\n');
        for row in self.sorted_rows() {
            out.push_str(&format!("| {} | {} | {} |", row.dataset, row.method, row.features));
            for c in &row.cells {
                out.push_str(&format!(" {:.4} |", c));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV form emitted by [`ReportTable::emit_csv`]. Leading
    /// `#` comment lines are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("report csv".to_string()))?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() < 4 || fields[..3] != ["dataset", "method", "features"] {
            return Err(Error::InvalidConfig(format!("unexpected report header '{header}'")));
        }
        let periods: Vec<String> = fields[3..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 + periods.len() {
                return Err(Error::LengthMismatch(format!("report row '{line}'")));
            }
            let cells = parts[3..]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidConfig(format!("bad cell '{s}'")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(ReportRow {
                dataset: parts[0].to_string(),
                method: parts[1].to_string(),
                features: parts[2].to_string(),
                cells,
            });
        }
        Self::new(periods, rows)
    }
}

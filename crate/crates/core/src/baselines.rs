//! Non-learning univariate baselines: lagged copying and simple exponential
//! smoothing with its grid search.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::{Error, Result};

/// Forecast by repeating the last `lag`-hour block of the history:
/// `forecast[h] = history[len − lag + (h mod lag)]`.
pub fn copy_last(history: &[f64], lag: usize, horizon: usize) -> Result<Vec<f64>> {
    if lag == 0 {
        return Err(Error::InvalidConfig("copy_last lag must be ≥ 1".to_string()));
    }
    if history.len() < lag {
        return Err(Error::InsufficientData { needed: lag, got: history.len() });
    }
    let base = history.len() - lag;
    Ok((0..horizon).map(|h| history[base + h % lag]).collect())
}

/// Simple exponential smoothing: `s ← α·x + (1−α)·s`, state initialized to
/// the first observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsModel {
    pub alpha: f64,
    state: Option<f64>,
}

impl EsModel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 1]")));
        }
        Ok(Self { alpha, state: None })
    }

    pub fn state(&self) -> Option<f64> {
        self.state
    }

    pub fn update(&mut self, x: f64) {
        self.state = Some(match self.state {
            None => x,
            Some(s) => self.alpha * x + (1.0 - self.alpha) * s,
        });
    }

    /// Flat multi-step forecast of the current state.
    pub fn forecast(&self, horizon: usize) -> Result<Vec<f64>> {
        let s = self.state.ok_or(Error::NoObservations)?;
        Ok(alloc::vec![s; horizon])
    }
}

/// One-step MAE of an α over the validation sequence, state warmed on
/// `train` first.
fn one_step_mae(alpha: f64, train: &[f64], validation: &[f64]) -> f64 {
    let mut model = EsModel { alpha, state: None };
    for &x in train {
        model.update(x);
    }
    let mut abs_sum = 0.0;
    let mut scored = 0usize;
    for &x in validation {
        if let Some(s) = model.state {
            abs_sum += fmath::abs(x - s);
            scored += 1;
        }
        model.update(x);
    }
    if scored == 0 {
        return f64::INFINITY;
    }
    abs_sum / scored as f64
}

/// Exhaustive grid over α ∈ {0.0001, 0.0002, …, 1.0000}, returning the α
/// with the lowest one-step validation MAE. Ties go to the larger α, so a
/// flat error surface deterministically yields 1.0.
pub fn es_grid_search(train: &[f64], validation: &[f64]) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation sequence".to_string()));
    }
    let mut best_alpha = 0.0;
    let mut best_mae = f64::INFINITY;
    for k in 1..=10_000u32 {
        let alpha = k as f64 / 10_000.0;
        let mae = one_step_mae(alpha, train, validation);
        if mae <= best_mae {
            best_mae = mae;
            best_alpha = alpha;
        }
    }
    Ok(best_alpha)
}

//! Hourly time-series frames, calendar features, feature-set assembly,
//! standard scaling, and supervised windowing.
//!
//! A [`TimeFrame`] is an hourly-indexed matrix of named columns: index `i`
//! maps to `start + i` hours, with no gaps and no duplicates. All values are
//! finite. Frames are immutable after construction and cheap to share.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::{Error, Result};

/// A point on the hourly UTC grid, stored as whole hours since the Unix epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct HourStamp(pub i64);

impl HourStamp {
    /// Build from a UTC civil date and hour-of-day.
    pub fn from_ymd_hour(year: i32, month: u32, day: u32, hour: u32) -> Result<Self> {
        let dt = Utc
            .with_ymd_and_hms(year, month, day, hour, 0, 0)
            .single()
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "invalid UTC date {year:04}-{month:02}-{day:02}T{hour:02}:00"
                ))
            })?;
        Ok(Self(dt.timestamp() / 3600))
    }

    /// Convert from a chrono instant; errors unless it sits on a top-of-hour.
    pub fn from_datetime(dt: DateTime<Utc>) -> Result<Self> {
        let secs = dt.timestamp();
        if secs % 3600 != 0 || dt.timestamp_subsec_nanos() != 0 {
            return Err(Error::InvalidConfig(format!(
                "timestamp {dt} is not a top-of-hour instant"
            )));
        }
        Ok(Self(secs / 3600))
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0 * 3600, 0).expect("hour stamp within chrono range")
    }

    /// Hour of day in `0..=23`.
    pub fn hour_of_day(self) -> u32 {
        self.to_datetime().hour()
    }

    /// Day of week with Monday = 0 … Sunday = 6.
    pub fn day_of_week(self) -> u32 {
        self.to_datetime().weekday().num_days_from_monday()
    }

    pub fn offset(self, hours: i64) -> Self {
        Self(self.0 + hours)
    }
}

impl core::fmt::Display for HourStamp {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

/// One named column of an hourly frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), unit: unit.into(), values }
    }
}

/// Hourly-indexed, named-column matrix of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeFrame {
    start: HourStamp,
    columns: Vec<Column>,
}

impl TimeFrame {
    /// Validates equal column lengths (≥ 1), unique names, and finite values.
    pub fn new(start: HourStamp, columns: Vec<Column>) -> Result<Self> {
        let len = columns
            .first()
            .map(|c| c.values.len())
            .ok_or_else(|| Error::EmptyInput("frame with no columns".to_string()))?;
        if len == 0 {
            return Err(Error::EmptyInput("frame columns of length 0".to_string()));
        }
        for col in &columns {
            if col.values.len() != len {
                return Err(Error::LengthMismatch(format!(
                    "column '{}' has {} rows, expected {}",
                    col.name,
                    col.values.len(),
                    len
                )));
            }
            if let Some(i) = col.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "column '{}' at {}",
                    col.name,
                    start.offset(i as i64)
                )));
            }
        }
        for (i, a) in columns.iter().enumerate() {
            if columns[i + 1..].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidConfig(format!("duplicate column '{}'", a.name)));
            }
        }
        Ok(Self { start, columns })
    }

    pub fn start(&self) -> HourStamp {
        self.start
    }

    /// One past the last indexed hour.
    pub fn end(&self) -> HourStamp {
        self.start.offset(self.len() as i64)
    }

    pub fn len(&self) -> usize {
        self.columns[0].values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length ≥ 1 by construction
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::ColumnMissing(name.to_string()))
    }

    pub fn timestamp(&self, index: usize) -> HourStamp {
        self.start.offset(index as i64)
    }

    /// Row index of an hour stamp, if it lies inside the frame.
    pub fn index_of(&self, t: HourStamp) -> Option<usize> {
        let off = t.0 - self.start.0;
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    /// Copy of the first `hours` rows.
    pub fn truncated(&self, hours: usize) -> Result<Self> {
        if hours == 0 || hours > self.len() {
            return Err(Error::InsufficientData { needed: 1, got: hours });
        }
        let columns = self
            .columns
            .iter()
            .map(|c| Column::new(c.name.clone(), c.unit.clone(), c.values[..hours].to_vec()))
            .collect();
        Self::new(self.start, columns)
    }
}

/// The four feature-set kinds: energy+calendar, plus mobility and/or
/// temperature blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    E,
    Em,
    Et,
    Etm,
}

impl FeatureKind {
    pub fn uses_mobility(self) -> bool {
        matches!(self, FeatureKind::Em | FeatureKind::Etm)
    }

    pub fn uses_temperature(self) -> bool {
        matches!(self, FeatureKind::Et | FeatureKind::Etm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::E => "E",
            FeatureKind::Em => "EM",
            FeatureKind::Et => "ET",
            FeatureKind::Etm => "ETM",
        }
    }
}

impl core::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" => Ok(FeatureKind::E),
            "EM" => Ok(FeatureKind::Em),
            "ET" => Ok(FeatureKind::Et),
            "ETM" => Ok(FeatureKind::Etm),
            other => Err(Error::InvalidConfig(format!("unknown feature set '{other}'"))),
        }
    }
}

/// Selects which columns [`assemble`] turns into model features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    /// Names of the pedestrian-counter columns; empty unless the kind uses
    /// mobility.
    pub counter_names: Vec<String>,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind, counter_names: Vec<String>) -> Result<Self> {
        if kind.uses_mobility() && counter_names.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "feature set {kind} needs at least one counter column"
            )));
        }
        if !kind.uses_mobility() && !counter_names.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "feature set {kind} does not take counter columns"
            )));
        }
        Ok(Self { kind, counter_names })
    }

    /// Derived feature width: E=3, ET=4, EM=n+5, ETM=n+6.
    pub fn width(&self) -> usize {
        let n = self.counter_names.len();
        match self.kind {
            FeatureKind::E => 3,
            FeatureKind::Et => 4,
            FeatureKind::Em => n + 5,
            FeatureKind::Etm => n + 6,
        }
    }
}

/// Hour-of-day (`0..=23`) and day-of-week (Monday = 0) sequences for an
/// hourly index starting at `start`.
pub fn calendar_features(start: HourStamp, length: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hod = Vec::with_capacity(length);
    let mut dow = Vec::with_capacity(length);
    for i in 0..length {
        let t = start.offset(i as i64);
        hod.push(t.hour_of_day() as f64);
        dow.push(t.day_of_week() as f64);
    }
    (hod, dow)
}

fn check_counter_lengths(counters: &[&[f64]]) -> Result<usize> {
    let first = counters
        .first()
        .ok_or_else(|| Error::EmptyInput("counter set".to_string()))?;
    let len = first.len();
    if counters.iter().any(|c| c.len() != len) {
        return Err(Error::LengthMismatch("counter series lengths differ".to_string()));
    }
    Ok(len)
}

/// Elementwise arithmetic mean across counter series.
pub fn micro_average(counters: &[&[f64]]) -> Result<Vec<f64>> {
    let len = check_counter_lengths(counters)?;
    let k = counters.len() as f64;
    Ok((0..len)
        .map(|i| counters.iter().map(|c| c[i]).sum::<f64>() / k)
        .collect())
}

/// Per-series min-max normalization to [0, 1], then elementwise mean.
/// A zero-range series maps to all zeros.
pub fn macro_average(counters: &[&[f64]]) -> Result<Vec<f64>> {
    let len = check_counter_lengths(counters)?;
    let k = counters.len() as f64;
    let normalized: Vec<Vec<f64>> = counters
        .iter()
        .map(|c| {
            let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            if range <= 0.0 {
                vec![0.0; len]
            } else {
                c.iter().map(|v| (v - min) / range).collect()
            }
        })
        .collect();
    Ok((0..len)
        .map(|i| normalized.iter().map(|c| c[i]).sum::<f64>() / k)
        .collect())
}

/// Builds the model-facing feature frame for one feature set.
///
/// Column order is `[E, HoD, DoW]`, then the counters followed by their
/// micro and macro averages when the kind uses mobility, then `T` when it
/// uses temperature.
pub fn assemble(frame: &TimeFrame, spec: &FeatureSpec) -> Result<TimeFrame> {
    let energy = frame.column("E")?;
    let len = frame.len();
    let (hod, dow) = calendar_features(frame.start(), len);

    let mut columns = Vec::with_capacity(spec.width());
    columns.push(Column::new("E", energy.unit.clone(), energy.values.clone()));
    columns.push(Column::new("HoD", "", hod));
    columns.push(Column::new("DoW", "", dow));

    if spec.kind.uses_mobility() {
        let counter_cols: Vec<&Column> = spec
            .counter_names
            .iter()
            .map(|name| frame.column(name))
            .collect::<Result<_>>()?;
        let series: Vec<&[f64]> = counter_cols.iter().map(|c| c.values.as_slice()).collect();
        let micro = micro_average(&series)?;
        let macro_ = macro_average(&series)?;
        for col in counter_cols {
            columns.push(col.clone());
        }
        columns.push(Column::new("M_micro", "count", micro));
        columns.push(Column::new("M_macro", "", macro_));
    }

    if spec.kind.uses_temperature() {
        let temp = frame.column("T")?;
        columns.push(Column::new("T", temp.unit.clone(), temp.values.clone()));
    }

    debug_assert_eq!(columns.len(), spec.width());
    TimeFrame::new(frame.start(), columns)
}

/// Supervised windows over a feature frame: `x` holds `n` windows of shape
/// `(window, width)` row-major, `y` holds the matching `horizon`-step
/// targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBatch {
    pub n: usize,
    pub window: usize,
    pub width: usize,
    pub horizon: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl WindowBatch {
    /// Assemble a batch from raw flattened storage.
    pub fn from_parts(
        window: usize,
        width: usize,
        horizon: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self> {
        let stride = window * width;
        if stride == 0 || horizon == 0 || x.len() % stride != 0 {
            return Err(Error::LengthMismatch(format!(
                "window batch storage {} not divisible by {window}x{width}",
                x.len()
            )));
        }
        let n = x.len() / stride;
        if y.len() != n * horizon {
            return Err(Error::LengthMismatch(format!(
                "window batch targets {} != {n} x {horizon}",
                y.len()
            )));
        }
        Ok(Self { n, window, width, horizon, x, y })
    }

    /// Flattened `(window × width)` input rows for sample `i`.
    pub fn input(&self, i: usize) -> &[f64] {
        let stride = self.window * self.width;
        &self.x[i * stride..(i + 1) * stride]
    }

    /// `horizon`-step target for sample `i`.
    pub fn target(&self, i: usize) -> &[f64] {
        &self.y[i * self.horizon..(i + 1) * self.horizon]
    }
}

/// Slides a `(window, horizon)` pair over the frame: sample `i` reads
/// feature rows `[i, i+window)` and target rows `[i+window, i+window+horizon)`.
pub fn make_windows(
    features: &TimeFrame,
    target_column: &str,
    window: usize,
    horizon: usize,
) -> Result<WindowBatch> {
    if window == 0 || horizon == 0 {
        return Err(Error::InvalidConfig("window and horizon must be ≥ 1".to_string()));
    }
    let len = features.len();
    if len < window + horizon {
        return Err(Error::InsufficientData { needed: window + horizon, got: len });
    }
    let target = features.column(target_column)?.values.clone();
    let width = features.width();
    let n = len - window - horizon + 1;

    let mut x = Vec::with_capacity(n * window * width);
    let mut y = Vec::with_capacity(n * horizon);
    for i in 0..n {
        for t in i..i + window {
            for col in features.columns() {
                x.push(col.values[t]);
            }
        }
        y.extend_from_slice(&target[i + window..i + window + horizon]);
    }
    Ok(WindowBatch { n, window, width, horizon, x, y })
}

/// Per-column standardization fitted on a row range.
///
/// A fitted standard deviation below `1e-12` is replaced by 1 so constant
/// columns transform to zeros instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn width(&self) -> usize {
        self.means.len()
    }

    /// Standardize every column of a frame with the fitted parameters.
    pub fn apply(&self, frame: &TimeFrame) -> Result<TimeFrame> {
        if frame.width() != self.width() {
            return Err(Error::LengthMismatch(format!(
                "scaler fitted on {} columns, frame has {}",
                self.width(),
                frame.width()
            )));
        }
        let columns = frame
            .columns()
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(col, (&m, &s))| {
                let values = col.values.iter().map(|v| (v - m) / s).collect();
                Column::new(col.name.clone(), col.unit.clone(), values)
            })
            .collect();
        TimeFrame::new(frame.start(), columns)
    }

    /// Map a single value back to original units for column `col`.
    pub fn invert_value(&self, col: usize, v: f64) -> f64 {
        v * self.stds[col] + self.means[col]
    }

    /// Standardize a single value for column `col`.
    pub fn apply_value(&self, col: usize, v: f64) -> f64 {
        (v - self.means[col]) / self.stds[col]
    }

    /// Inverse transform of a whole frame.
    pub fn invert(&self, frame: &TimeFrame) -> Result<TimeFrame> {
        if frame.width() != self.width() {
            return Err(Error::LengthMismatch(format!(
                "scaler fitted on {} columns, frame has {}",
                self.width(),
                frame.width()
            )));
        }
        let columns = frame
            .columns()
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let values = col.values.iter().map(|&v| self.invert_value(i, v)).collect();
                Column::new(col.name.clone(), col.unit.clone(), values)
            })
            .collect();
        TimeFrame::new(frame.start(), columns)
    }
}

/// Fit per-column mean and population std over `rows` only (the warm-up
/// range, so no statistics leak from the evaluation stream).
pub fn scaler_fit(frame: &TimeFrame, rows: core::ops::Range<usize>) -> Result<Scaler> {
    if rows.is_empty() || rows.end > frame.len() {
        return Err(Error::InvalidConfig(format!(
            "scaler fit range {}..{} invalid for frame of length {}",
            rows.start,
            rows.end,
            frame.len()
        )));
    }
    let mut means = Vec::with_capacity(frame.width());
    let mut stds = Vec::with_capacity(frame.width());
    for col in frame.columns() {
        let (mean, std) = fmath::mean_std(&col.values[rows.clone()]);
        means.push(mean);
        stds.push(if std < 1e-12 { 1.0 } else { std });
    }
    Ok(Scaler { means, stds })
}

/// Concatenate frame columns over the maximal common hourly index.
pub fn align(frames: &[TimeFrame]) -> Result<TimeFrame> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("align with no frames".to_string()));
    }
    let start = frames.iter().map(|f| f.start().0).max().unwrap();
    let end = frames.iter().map(|f| f.end().0).min().unwrap();
    if end <= start {
        return Err(Error::Schedule("frames have no common hourly index".to_string()));
    }
    let len = (end - start) as usize;
    let mut columns = Vec::new();
    for frame in frames {
        let offset = (start - frame.start().0) as usize;
        for col in frame.columns() {
            columns.push(Column::new(
                col.name.clone(),
                col.unit.clone(),
                col.values[offset..offset + len].to_vec(),
            ));
        }
    }
    TimeFrame::new(HourStamp(start), columns)
}

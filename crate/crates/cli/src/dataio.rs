//! CSV ingestion and emission for the three dataset files and the schedule
//! override format.
//!
//! All timestamps are ISO-8601 UTC at top-of-hour (`2020-03-23T00:00:00Z`).
//! Loaders sort rows, then demand a dense hourly index: a gap or duplicate
//! is an error naming the first offending timestamp, and any non-finite
//! value is rejected. Pedestrian counters arrive in long form
//! (`timestamp,sensor_id,count`) and every sensor must cover the full index.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use driftbench_core::schedule::{Period, PeriodSchedule};
use driftbench_core::timebase::{Column, HourStamp, TimeFrame};

/// Parse an ISO-8601 UTC timestamp and require it to be a top-of-hour.
pub fn parse_hour(s: &str) -> Result<HourStamp> {
    let dt: DateTime<Utc> = DateTime::parse_from_rfc3339(s)
        .with_context(|| format!("bad timestamp '{s}'"))?
        .with_timezone(&Utc);
    Ok(HourStamp::from_datetime(dt)?)
}

fn format_hour(t: HourStamp) -> String {
    t.to_datetime().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Sort and validate a dense hourly series of (timestamp, value) rows.
fn densify(mut rows: Vec<(HourStamp, f64)>, what: &str) -> Result<(HourStamp, Vec<f64>)> {
    if rows.is_empty() {
        bail!("{what}: no data rows");
    }
    rows.sort_by_key(|(t, _)| *t);
    for pair in rows.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        if a == b {
            bail!("{what}: duplicate timestamp {}", format_hour(a));
        }
        if b.0 != a.0 + 1 {
            bail!("{what}: gap at {}", format_hour(a.offset(1)));
        }
    }
    for (t, v) in &rows {
        if !v.is_finite() {
            bail!("{what}: non-finite value at {}", format_hour(*t));
        }
    }
    let start = rows[0].0;
    Ok((start, rows.into_iter().map(|(_, v)| v).collect()))
}

fn read_two_column(path: &Path, value_header: &str) -> Result<Vec<(HourStamp, f64)>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != value_header {
        bail!(
            "{}: expected header 'timestamp,{value_header}', got '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let t = parse_hour(&record[0])?;
        let v: f64 = record[1]
            .parse()
            .with_context(|| format!("bad {value_header} value '{}'", &record[1]))?;
        rows.push((t, v));
    }
    Ok(rows)
}

/// Energy file (`timestamp,kwh`) into a single-column frame named `E`.
pub fn load_energy_csv(path: &Path) -> Result<TimeFrame> {
    let rows = read_two_column(path, "kwh")?;
    let (start, values) = densify(rows, "energy")?;
    Ok(TimeFrame::new(start, vec![Column::new("E", "kWh", values)])?)
}

/// Temperature file (`timestamp,celsius`) into a single-column frame `T`.
pub fn load_temperature_csv(path: &Path) -> Result<TimeFrame> {
    let rows = read_two_column(path, "celsius")?;
    let (start, values) = densify(rows, "temperature")?;
    Ok(TimeFrame::new(start, vec![Column::new("T", "°C", values)])?)
}

/// Long-form counters file (`timestamp,sensor_id,count`) pivoted wide, one
/// column per sensor in sorted id order.
pub fn load_counters_csv(path: &Path) -> Result<TimeFrame> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.len() != 3
        || &headers[0] != "timestamp"
        || &headers[1] != "sensor_id"
        || &headers[2] != "count"
    {
        bail!(
            "{}: expected header 'timestamp,sensor_id,count', got '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut per_sensor: BTreeMap<String, Vec<(HourStamp, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let t = parse_hour(&record[0])?;
        let v: f64 = record[2]
            .parse()
            .with_context(|| format!("bad count value '{}'", &record[2]))?;
        per_sensor.entry(record[1].to_string()).or_default().push((t, v));
    }
    if per_sensor.is_empty() {
        bail!("counters: no data rows");
    }

    // Every sensor must cover the full hourly index.
    let global_start = per_sensor
        .values()
        .flat_map(|rows| rows.iter().map(|(t, _)| *t))
        .min()
        .unwrap();
    let global_end = per_sensor
        .values()
        .flat_map(|rows| rows.iter().map(|(t, _)| *t))
        .max()
        .unwrap();
    let expected_len = (global_end.0 - global_start.0 + 1) as usize;

    let mut columns = Vec::with_capacity(per_sensor.len());
    for (sensor, rows) in per_sensor {
        let (start, values) =
            densify(rows, &format!("counter sensor '{sensor}'"))?;
        if start != global_start || values.len() != expected_len {
            bail!(
                "counter sensor '{sensor}' does not cover the full index {}..{}",
                format_hour(global_start),
                format_hour(global_end)
            );
        }
        columns.push(Column::new(sensor, "count", values));
    }
    Ok(TimeFrame::new(global_start, columns)?)
}

fn write_two_column(frame: &TimeFrame, column: &str, header: &str, path: &Path) -> Result<()> {
    let col = frame.column(column)?;
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("create {}", path.display()))?,
    );
    writeln!(out, "timestamp,{header}")?;
    for (i, v) in col.values.iter().enumerate() {
        writeln!(out, "{},{}", format_hour(frame.timestamp(i)), v)?;
    }
    Ok(())
}

pub fn write_energy_csv(frame: &TimeFrame, path: &Path) -> Result<()> {
    write_two_column(frame, "E", "kwh", path)
}

pub fn write_temperature_csv(frame: &TimeFrame, path: &Path) -> Result<()> {
    write_two_column(frame, "T", "celsius", path)
}

/// Write every non-`E`/non-`T` column as long-form counter rows ordered by
/// timestamp then sensor id.
pub fn write_counters_csv(frame: &TimeFrame, path: &Path) -> Result<()> {
    let sensors: Vec<&Column> = frame
        .columns()
        .iter()
        .filter(|c| c.name != "E" && c.name != "T")
        .collect();
    if sensors.is_empty() {
        bail!("frame has no counter columns to write");
    }
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("create {}", path.display()))?,
    );
    writeln!(out, "timestamp,sensor_id,count")?;
    for i in 0..frame.len() {
        let ts = format_hour(frame.timestamp(i));
        for col in &sensors {
            writeln!(out, "{ts},{},{}", col.name, col.values[i])?;
        }
    }
    Ok(())
}

/// Schedule override file: headerless lines `name,start_iso,end_iso`.
pub fn load_schedule_file(path: &Path) -> Result<PeriodSchedule> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("read {}", path.display()))?;
    let mut periods = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            bail!("{}:{}: expected 'name,start_iso,end_iso'", path.display(), lineno + 1);
        }
        periods.push(Period {
            name: parts[0].trim().to_string(),
            start: parse_hour(parts[1].trim())?,
            end: parse_hour(parts[2].trim())?,
        });
    }
    Ok(PeriodSchedule::new(periods)?)
}

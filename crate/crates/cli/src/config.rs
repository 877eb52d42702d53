//! TOML experiment configuration: parsing, `--override key=value` patching,
//! dataset loading, and conversion into the core run configuration.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use driftbench_core::harness::{Method, MethodParams, RunConfig};
use driftbench_core::schedule::{default_melbourne_schedule, Period, PeriodSchedule};
use driftbench_core::synth::{synth_generate, SynthConfig};
use driftbench_core::timebase::{align, FeatureKind, FeatureSpec, TimeFrame};

use crate::dataio;

fn default_features() -> String {
    "E".to_string()
}

fn default_window() -> usize {
    168
}

fn default_horizon() -> usize {
    1
}

/// Top-level experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset label used in result rows; defaults from the data source.
    pub name: Option<String>,
    pub method: String,
    #[serde(default = "default_features")]
    pub features: String,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub params: MethodParams,
    #[serde(default)]
    pub hpo: HpoConfig,
    #[serde(default)]
    pub replicate: ReplicateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `csv` (default) or `synth`.
    #[serde(default)]
    pub kind: DataKind,
    pub energy: Option<PathBuf>,
    pub counters: Option<PathBuf>,
    pub temperature: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    #[default]
    Csv,
    Synth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// `melbourne` (default), `file`, or `inline`.
    #[serde(default = "default_schedule_kind")]
    pub kind: String,
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub period: Vec<PeriodConfig>,
}

fn default_schedule_kind() -> String {
    "melbourne".to_string()
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { kind: default_schedule_kind(), file: None, period: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub name: String,
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpoConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    20
}

impl Default for HpoConfig {
    fn default() -> Self {
        Self { budget: default_budget() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateConfig {
    #[serde(default = "default_replicates")]
    pub n: usize,
}

fn default_replicates() -> usize {
    10
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self { n: default_replicates() }
    }
}

/// Parse a TOML literal for an override value: integer, float, boolean, or
/// bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    if let Ok(v) = raw.parse::<i64>() {
        return toml::Value::Integer(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return toml::Value::Float(v);
    }
    if let Ok(v) = raw.parse::<bool>() {
        return toml::Value::Boolean(v);
    }
    toml::Value::String(raw.to_string())
}

/// Apply `key.path=value` patches onto a parsed TOML document.
fn apply_overrides(doc: &mut toml::Value, overrides: &[String]) -> Result<()> {
    for entry in overrides {
        let (path, raw) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{entry}' is not key=value"))?;
        let segments: Vec<&str> = path.split('.').collect();
        let (last, walk) = segments.split_last().expect("split produces at least one segment");
        let mut node = &mut *doc;
        for seg in walk {
            let table = node
                .as_table_mut()
                .ok_or_else(|| anyhow!("override '{path}': '{seg}' is not a table"))?;
            node = table
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("override '{path}' does not address a table"))?;
        table.insert(last.to_string(), parse_override_value(raw));
    }
    Ok(())
}

/// Load an experiment config, applying `--override` patches before
/// deserialization so unknown keys are still rejected.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("read config {}", path.display()))?;
    let mut doc: toml::Value =
        toml::from_str(&text).with_context(|| format!("parse {}", path.display()))?;
    apply_overrides(&mut doc, overrides)?;
    let cfg: ExperimentConfig = doc
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Load or generate the raw dataset frame; returns it with a display name.
pub fn load_frame(cfg: &ExperimentConfig, config_dir: &Path) -> Result<(TimeFrame, String)> {
    let (frame, default_name) = match cfg.data.kind {
        DataKind::Synth => {
            let synth = cfg
                .data
                .synth
                .as_ref()
                .ok_or_else(|| anyhow!("data.kind = 'synth' needs a [data.synth] table"))?;
            (synth_generate(synth)?, "synth".to_string())
        }
        DataKind::Csv => {
            let energy = cfg
                .data
                .energy
                .as_ref()
                .ok_or_else(|| anyhow!("data.kind = 'csv' needs data.energy"))?;
            let energy_path = resolve(config_dir, energy);
            let mut frames = vec![dataio::load_energy_csv(&energy_path)?];
            if let Some(counters) = &cfg.data.counters {
                frames.push(dataio::load_counters_csv(&resolve(config_dir, counters))?);
            }
            if let Some(temperature) = &cfg.data.temperature {
                frames.push(dataio::load_temperature_csv(&resolve(config_dir, temperature))?);
            }
            let name = energy_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".to_string());
            (align(&frames)?, name)
        }
    };
    Ok((frame, cfg.name.clone().unwrap_or(default_name)))
}

/// Counter column names available in a frame, in deterministic order.
pub fn counter_columns(frame: &TimeFrame) -> Vec<String> {
    let mut names: Vec<String> = frame
        .columns()
        .iter()
        .filter(|c| c.name != "E" && c.name != "T")
        .map(|c| c.name.clone())
        .collect();
    names.sort();
    names
}

/// Build a feature spec for one feature-set kind against the frame.
pub fn feature_spec_for(frame: &TimeFrame, kind: FeatureKind) -> Result<FeatureSpec> {
    let counters = if kind.uses_mobility() { counter_columns(frame) } else { Vec::new() };
    if kind.uses_mobility() && counters.is_empty() {
        bail!("feature set {kind} needs counter columns, none found in the data");
    }
    Ok(FeatureSpec::new(kind, counters)?)
}

/// Resolve the evaluation schedule for a frame.
pub fn build_schedule(
    cfg: &ExperimentConfig,
    frame: &TimeFrame,
    config_dir: &Path,
) -> Result<PeriodSchedule> {
    match cfg.schedule.kind.as_str() {
        "melbourne" => Ok(default_melbourne_schedule(frame.start(), frame.end())?),
        "file" => {
            let file = cfg
                .schedule
                .file
                .as_ref()
                .ok_or_else(|| anyhow!("schedule.kind = 'file' needs schedule.file"))?;
            dataio::load_schedule_file(&resolve(config_dir, file))
        }
        "inline" => {
            let periods = cfg
                .schedule
                .period
                .iter()
                .map(|p| {
                    Ok(Period {
                        name: p.name.clone(),
                        start: dataio::parse_hour(&p.start)?,
                        end: dataio::parse_hour(&p.end)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PeriodSchedule::new(periods)?)
        }
        other => bail!("unknown schedule.kind '{other}'"),
    }
}

/// Assemble the core run configuration for a loaded frame.
pub fn build_run_config(
    cfg: &ExperimentConfig,
    frame: &TimeFrame,
    config_dir: &Path,
) -> Result<RunConfig> {
    let method: Method = cfg.method.parse()?;
    let kind: FeatureKind = cfg.features.parse()?;
    let feature_spec = feature_spec_for(frame, kind)?;
    let schedule = build_schedule(cfg, frame, config_dir)?;
    Ok(RunConfig {
        feature_spec,
        method,
        window: cfg.window,
        horizon: cfg.horizon,
        schedule,
        seed: cfg.seed,
        params: cfg.params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &tempfile::TempDir, content: &str) -> PathBuf {
        let path = dir.path().join("run.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    const SYNTH_CONFIG: &str = r#"
method = "copy_last_hour"
seed = 3

[data]
kind = "synth"

[data.synth]
length = 3000
seed = 9

[schedule]
kind = "inline"

[[schedule.period]]
name = "all"
start = "2019-01-01T00:00:00Z"
end = "2019-06-01T00:00:00Z"
"#;

    #[test]
    fn parses_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, SYNTH_CONFIG);
        let cfg = load_config(&path, &[]).unwrap();
        assert_eq!(cfg.window, 168);
        assert_eq!(cfg.horizon, 1);
        assert_eq!(cfg.hpo.budget, 20);
        assert_eq!(cfg.replicate.n, 10);
        assert_eq!(cfg.data.synth.as_ref().unwrap().length, 3000);
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, SYNTH_CONFIG);
        let cfg = load_config(
            &path,
            &[
                "window=24".to_string(),
                "params.lr=0.005".to_string(),
                "data.synth.seed=77".to_string(),
                "method=net_ol".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.window, 24);
        assert_eq!(cfg.params.lr, 0.005);
        assert_eq!(cfg.data.synth.unwrap().seed, 77);
        assert_eq!(cfg.method, "net_ol");
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, "method = \"es\"\nfrobnicate = 1\n[data]\nkind = \"synth\"\n");
        assert!(load_config(&path, &[]).is_err());
    }

    #[test]
    fn bad_override_shape_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, SYNTH_CONFIG);
        assert!(load_config(&path, &["windowless".to_string()]).is_err());
    }

    #[test]
    fn run_config_builds_from_synth() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, SYNTH_CONFIG);
        let cfg = load_config(&path, &[]).unwrap();
        let (frame, name) = load_frame(&cfg, dir.path()).unwrap();
        assert_eq!(name, "synth");
        assert_eq!(frame.len(), 3000);
        let run_cfg = build_run_config(&cfg, &frame, dir.path()).unwrap();
        assert_eq!(run_cfg.method, Method::CopyLastHour);
        assert_eq!(run_cfg.schedule.names(), vec!["all"]);
    }
}

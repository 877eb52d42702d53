//! Implementations of the CLI verbs.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use driftbench_core::harness::{
    apply_draw, preset_space, random_search, run_with_progress, validation_mae, Method, RunConfig,
    RunResult,
};
use driftbench_core::timebase::{FeatureKind, TimeFrame};

use crate::config::{
    build_run_config, feature_spec_for, load_config, load_frame, ExperimentConfig,
};
use crate::dataio;
use crate::results::{aggregate_table, append_rows, read_rows, rows_from_run, ResultRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

type Job<'a, T> = Box<dyn FnOnce() -> Result<T> + Send + 'a>;

/// One resolved CLI invocation.
pub struct Invocation {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub workers: usize,
    pub format: OutputFormat,
}

impl Invocation {
    fn config_dir(&self) -> PathBuf {
        self.config.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
    }

    fn results_path(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results.csv"))
    }

    fn load(&self) -> Result<(ExperimentConfig, TimeFrame, String)> {
        let cfg = load_config(&self.config, &self.overrides)?;
        let (frame, name) = load_frame(&cfg, &self.config_dir())?;
        Ok((cfg, frame, name))
    }
}

/// Run independent jobs on up to `workers` threads; the output order is the
/// job order regardless of completion order.
fn run_jobs<T, F>(jobs: Vec<F>, workers: usize) -> Result<Vec<T>>
where
    T: Send,
    F: FnOnce() -> Result<T> + Send,
{
    let n = jobs.len();
    let workers = workers.max(1).min(n.max(1));
    if workers <= 1 {
        return jobs.into_iter().map(|job| job()).collect();
    }
    let slots: Mutex<Vec<Option<Result<T>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    let queue: Mutex<Vec<(usize, F)>> = Mutex::new(jobs.into_iter().enumerate().rev().collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop();
                let Some((idx, job)) = next else { break };
                let result = job();
                slots.lock().expect("slot lock")[idx] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| anyhow!("job {i} produced no result"))?)
        .collect()
}

fn timed_run(frame: &TimeFrame, cfg: &RunConfig, label: &str) -> Result<RunResult> {
    let start = Instant::now();
    let mut progress = |streamed: usize| eprintln!("[{label}] streamed {streamed} hours");
    let mut result = run_with_progress(frame, cfg, Some(&mut progress))?;
    result.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// `validate`: parse, load, and assemble everything without running.
pub fn validate(inv: &Invocation) -> Result<()> {
    let (cfg, frame, name) = inv.load()?;
    let run_cfg = build_run_config(&cfg, &frame, &inv.config_dir())?;
    println!(
        "ok: {name} method={} features={} frame={}h periods={}",
        run_cfg.method,
        run_cfg.feature_spec.kind,
        frame.len(),
        run_cfg.schedule.names().join("/")
    );
    Ok(())
}

/// `run`: one experiment, rows appended to the results CSV.
pub fn run(inv: &Invocation) -> Result<()> {
    let (cfg, frame, name) = inv.load()?;
    let run_cfg = build_run_config(&cfg, &frame, &inv.config_dir())?;
    let label = format!("{name}/{}", run_cfg.method);
    let result = timed_run(&frame, &run_cfg, &label)?;
    append_rows(&inv.results_path(), &rows_from_run(&name, &result))?;
    eprintln!(
        "[{label}] done in {:.1}s, overall mae {:.4}",
        result.runtime_seconds,
        result.overall_mae()
    );
    Ok(())
}

fn feasible_feature_kinds(frame: &TimeFrame) -> Vec<FeatureKind> {
    let has_t = frame.column("T").is_ok();
    let has_m = frame.columns().iter().any(|c| c.name != "E" && c.name != "T");
    let mut kinds = vec![FeatureKind::E];
    if has_m {
        kinds.push(FeatureKind::Em);
    }
    if has_t {
        kinds.push(FeatureKind::Et);
    }
    if has_t && has_m {
        kinds.push(FeatureKind::Etm);
    }
    kinds
}

/// `sweep`: the cartesian product of all methods and feasible feature sets.
pub fn sweep(inv: &Invocation) -> Result<()> {
    let (cfg, frame, name) = inv.load()?;
    let base = build_run_config(&cfg, &frame, &inv.config_dir())?;
    let kinds = feasible_feature_kinds(&frame);

    let mut jobs: Vec<Job<'_, Vec<ResultRow>>> = Vec::new();
    for &method in &Method::ALL {
        for &kind in &kinds {
            let mut run_cfg = base.clone();
            run_cfg.method = method;
            run_cfg.feature_spec = feature_spec_for(&frame, kind)?;
            let frame_ref = &frame;
            let label = format!("{name}/{method}/{kind}");
            let dataset = name.clone();
            jobs.push(Box::new(move || {
                let result = timed_run(frame_ref, &run_cfg, &label)?;
                Ok(rows_from_run(&dataset, &result))
            }));
        }
    }
    let all_rows = run_jobs(jobs, inv.workers)?;
    let flat: Vec<ResultRow> = all_rows.into_iter().flatten().collect();
    append_rows(&inv.results_path(), &flat)?;
    eprintln!("[{name}] sweep wrote {} rows", flat.len());
    Ok(())
}

/// `hpo`: budgeted uniform random search on the method's preset space; the
/// winning parameters are emitted as TOML `params.*` lines.
pub fn hpo(inv: &Invocation) -> Result<()> {
    let (cfg, frame, name) = inv.load()?;
    let base = build_run_config(&cfg, &frame, &inv.config_dir())?;
    let space = preset_space(base.method)
        .ok_or_else(|| anyhow!("method '{}' has no tunable hyperparameters", base.method))?;
    let (best, score) = random_search(&space, cfg.hpo.budget, base.seed, |draw| {
        let mut candidate = base.clone();
        apply_draw(&mut candidate.params, &space, draw)?;
        validation_mae(&frame, &candidate)
    })?;

    let mut tuned = base.params.clone();
    apply_draw(&mut tuned, &space, &best)?;
    let mut text = format!("# validation_mae = {score}\n");
    for (dim, value) in space.dims.iter().zip(&best) {
        match dim.name.as_str() {
            "channels" | "blocks" | "kernel" => {
                text.push_str(&format!("params.{} = {}\n", dim.name, *value as i64));
            }
            _ => text.push_str(&format!("params.{} = {}\n", dim.name, value)),
        }
    }
    match &inv.out {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("write {}", path.display()))?,
        None => print!("{text}"),
    }
    eprintln!("[{name}/{}] best validation mae {score:.4}", base.method);
    Ok(())
}

/// `replicate`: the configured number of seeded runs, appended per seed.
pub fn replicate(inv: &Invocation) -> Result<()> {
    let (cfg, frame, name) = inv.load()?;
    let base = build_run_config(&cfg, &frame, &inv.config_dir())?;
    let n = cfg.replicate.n;
    if n == 0 {
        bail!("replicate.n must be ≥ 1");
    }

    let mut jobs: Vec<Job<'_, (RunResult, Vec<ResultRow>)>> = Vec::new();
    for i in 0..n {
        let mut seeded = base.clone();
        seeded.seed = base.seed + i as u64;
        let frame_ref = &frame;
        let label = format!("{name}/{}/seed{}", seeded.method, seeded.seed);
        let dataset = name.clone();
        jobs.push(Box::new(move || {
            let result = timed_run(frame_ref, &seeded, &label)?;
            let rows = rows_from_run(&dataset, &result);
            Ok((result, rows))
        }));
    }
    let outputs = run_jobs(jobs, inv.workers)?;
    let mut flat = Vec::new();
    let mut runs = Vec::new();
    for (result, rows) in outputs {
        flat.extend(rows);
        runs.push(result);
    }
    append_rows(&inv.results_path(), &flat)?;

    for (i, period) in runs[0].periods.iter().enumerate() {
        let maes: Vec<f64> = runs.iter().map(|r| r.periods[i].mae).collect();
        let mean = maes.iter().sum::<f64>() / maes.len() as f64;
        let var =
            maes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / maes.len() as f64;
        eprintln!(
            "[{name}/{}] {}: mae {mean:.4} ± {:.4} over {n} seeds",
            base.method,
            period.name,
            var.sqrt()
        );
    }
    Ok(())
}

/// `report`: aggregate a results CSV (passed as `--config`) into the
/// method × feature table, ordered ascending by the PLD column.
pub fn report(inv: &Invocation) -> Result<()> {
    let rows = read_rows(&inv.config)?;
    if rows.is_empty() {
        bail!("results file {} has no rows", inv.config.display());
    }
    let table = aggregate_table(&rows)?;
    // Period metrics cover the whole post-warm-up stream, validation month
    // included; every emitted report carries that note.
    let note = "period metrics include the post-warm-up validation month";
    let text = match inv.format {
        OutputFormat::Csv => format!("# {note}\n{}", table.emit_csv()),
        OutputFormat::Markdown => format!("{}\n*{note}*\n", table.emit_markdown()),
    };
    match &inv.out {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// `synth`: write the three dataset CSVs for the configured generator.
pub fn synth(inv: &Invocation) -> Result<()> {
    let cfg = load_config(&inv.config, &inv.overrides)?;
    let synth_cfg = cfg
        .data
        .synth
        .as_ref()
        .ok_or_else(|| anyhow!("synth needs a [data.synth] table"))?;
    let frame = driftbench_core::synth::synth_generate(synth_cfg)?;
    let dir = inv.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("create output dir {}", dir.display()))?;

    let energy = dir.join("energy.csv");
    dataio::write_energy_csv(&frame, &energy)?;
    eprintln!("wrote {}", energy.display());
    let temperature = dir.join("temperature.csv");
    dataio::write_temperature_csv(&frame, &temperature)?;
    eprintln!("wrote {}", temperature.display());
    if synth_cfg.n_counters > 0 {
        let counters = dir.join("counters.csv");
        dataio::write_counters_csv(&frame, &counters)?;
        eprintln!("wrote {}", counters.display());
    }
    Ok(())
}

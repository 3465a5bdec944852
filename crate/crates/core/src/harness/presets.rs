//! Experiment presets. Each writes its manifest first, runs its jobs on a
//! worker pool, then writes CSVs in job order so that output is independent of
//! scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::agents::{save_listener, save_speaker, ListenerAgent, SpeakerAgent};
use crate::analysis::{g_threshold, mean_last, mean_last_rho, rho_histogram, RhoHistogram};
use crate::language::{generate_compositional, permute_language, Dataset, Language};
use crate::nil::{run_nil, GenerationRecord, PhasePoint, ResetStrategy};
use crate::topsim::{pearson, topological_similarity};
use crate::training::{pretrain_listener, pretrain_speaker_batch, sequence_accuracy};
use crate::{Error, Result};

use super::config::{ExperimentConfig, RobustVariant};
use super::output::{
    generation_row, histogram_rows, output_root, round_row, write_manifest, CsvSink, GENERATIONS_HEADER,
    HISTOGRAM_HEADER, ROUNDS_HEADER,
};
use super::plot::{emit_plot, ChartKind, PlotSpec};

pub const PRESETS: &[&str] = &["run", "resets", "sweep", "speed", "zeroshot", "robust"];

/// Threshold and window of the G-threshold column.
pub const G_THRESHOLD: f64 = 0.85;
pub const G_WINDOW: usize = 3;
/// Trailing generations averaged into the per-run summaries.
pub const SUMMARY_WINDOW: usize = 3;

/// Where a preset writes: the configured directory or `<output root>/<preset>`.
pub fn preset_dir(cfg: &ExperimentConfig, preset: &str) -> PathBuf {
    cfg.experiment
        .output_dir
        .clone()
        .unwrap_or_else(|| output_root().join(preset))
}

/// One NIL run of a preset.
#[derive(Debug, Clone)]
pub struct RunJob {
    pub run_id: String,
    pub cfg: ExperimentConfig,
    pub labels: Vec<(&'static str, String)>,
}

impl RunJob {
    pub fn seed(&self) -> u64 {
        self.cfg.nil.seed
    }

    pub fn label(&self, key: &str) -> Option<&str> {
        self.labels.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct RunData {
    pub records: Vec<GenerationRecord>,
    pub points: Vec<PhasePoint>,
    pub histograms: Vec<RhoHistogram>,
}

impl RunData {
    pub fn rho_last(&self, n: usize) -> f64 {
        mean_last_rho(&self.records, n)
    }

    pub fn accuracy_last(&self, n: usize) -> f64 {
        mean_last(&self.records, n, |r| r.end_accuracy)
    }

    pub fn valid_last(&self, n: usize) -> Option<f64> {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        let v: Vec<f64> = tail.iter().filter_map(|r| r.valid_accuracy).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn final_types(&self) -> usize {
        self.records.last().map_or(0, |r| r.message_type_count)
    }

    pub fn g_threshold(&self) -> Option<usize> {
        g_threshold(&self.records, G_THRESHOLD, G_WINDOW)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub save_agents: bool,
    pub quiet: bool,
}

/// Runs one job, writing per-generation languages under `runs/<run_id>/`.
pub fn execute_job(job: &RunJob, dir: &Path, opts: RunOptions) -> Result<RunData> {
    let run_dir = dir.join("runs").join(&job.run_id);
    let c = &job.cfg;
    let mut histograms = Vec::new();
    let outcome = run_nil(&c.space, &c.net, &c.train, &c.nil, |art| {
        let g = art.record.generation;
        let gen_dir = run_dir.join(format!("gen{g}"));
        fs::create_dir_all(&gen_dir)?;
        art.greedy_language.save(&gen_dir.join("language.jsonl"))?;
        art.next_dataset.save(&gen_dir.join("dataset.jsonl"))?;
        let mut h = rho_histogram(art.rho_samples, 10)?;
        h.generation = Some(g);
        histograms.push(h);
        if !opts.quiet {
            eprintln!(
                "[{}] generation {g}: accuracy {:.3} rho {:.3} types {}",
                job.run_id, art.record.end_accuracy, art.record.rho_greedy, art.record.message_type_count
            );
        }
        Ok(())
    })?;
    if opts.save_agents {
        save_speaker(&outcome.speaker, &run_dir.join("speaker.json"))?;
        save_listener(&outcome.listener, &run_dir.join("listener.json"))?;
    }
    Ok(RunData {
        records: outcome.records,
        points: outcome.points,
        histograms,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every job; results come back in job order.
pub fn execute_all(jobs: &[RunJob], dir: &Path, workers: usize, opts: RunOptions) -> Result<Vec<Result<RunData>>> {
    Ok(pool(workers)?.install(|| jobs.par_iter().map(|j| execute_job(j, dir, opts)).collect()))
}

/// Writes generations, rounds and histogram CSVs for the successful runs.
pub fn write_run_tables(dir: &Path, jobs: &[RunJob], results: &[Result<RunData>]) -> Result<()> {
    let mut gens = CsvSink::create(dir, "generations.csv", GENERATIONS_HEADER)?;
    let mut rounds = CsvSink::create(dir, "rounds.csv", ROUNDS_HEADER)?;
    let mut hist = CsvSink::create(dir, "histograms.csv", HISTOGRAM_HEADER)?;
    for (job, res) in jobs.iter().zip(results) {
        let Ok(data) = res else { continue };
        for r in &data.records {
            gens.row(generation_row(&job.run_id, job.seed(), job.cfg.nil.reset_strategy, r))?;
        }
        for p in &data.points {
            rounds.row(round_row(&job.run_id, p))?;
        }
        for h in &data.histograms {
            for row in histogram_rows(&job.run_id, h) {
                hist.row(row)?;
            }
        }
    }
    gens.finish()?;
    rounds.finish()?;
    hist.finish()
}

fn into_data(jobs: &[RunJob], results: Vec<Result<RunData>>) -> Result<Vec<RunData>> {
    jobs.iter()
        .zip(results)
        .map(|(j, r)| {
            r.map_err(|e| Error::RunFailed {
                run_id: j.run_id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

fn plot(dir: &Path, csv: &str, out: &str, spec: PlotSpec) -> Result<()> {
    emit_plot(&dir.join(csv), &spec, &dir.join(out))
}

fn line(x: &str, y: &str, series: &str, title: &str) -> PlotSpec {
    let mut p = PlotSpec::new(ChartKind::Line, x, y);
    p.series = Some(series.into());
    p.title = Some(title.into());
    p
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn seeded_job(base: &ExperimentConfig, run_id: String, seed: u64, labels: Vec<(&'static str, String)>) -> RunJob {
    let mut cfg = base.clone();
    cfg.nil.seed = seed;
    RunJob { run_id, cfg, labels }
}

/// A single NIL run with `nil.seed`, saving the final agents.
pub fn preset_run(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let dir = preset_dir(cfg, "run");
    write_manifest(&dir, "run", cfg, json!({}))?;
    let run_id = cfg
        .experiment
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-s{}", cfg.nil.reset_strategy, cfg.nil.seed));
    let jobs = vec![seeded_job(cfg, run_id, cfg.nil.seed, vec![])];
    let results = execute_all(&jobs, &dir, 1, RunOptions { save_agents: true, ..opts })?;
    let results: Vec<Result<RunData>> = into_data(&jobs, results)?.into_iter().map(Ok).collect();
    write_run_tables(&dir, &jobs, &results)?;
    plot(&dir, "generations.csv", "rho.svg", line("generation", "rho_greedy", "run_id", "greedy rho"))?;
    plot(&dir, "generations.csv", "accuracy.svg", line("generation", "end_accuracy", "run_id", "accuracy"))?;
    let mut hist = PlotSpec::new(ChartKind::Bar, "bin_low", "count");
    hist.series = Some("generation".into());
    hist.title = Some("rho of sampled languages".into());
    plot(&dir, "histograms.csv", "histograms.svg", hist)?;
    Ok(dir)
}

pub const RESETS_HEADER: &[&str] = &[
    "run_id",
    "reset_strategy",
    "seed",
    "rho_last3",
    "accuracy_last3",
    "message_types",
    "g_threshold",
];

/// Every reset strategy under every seed.
pub fn preset_resets(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let dir = preset_dir(cfg, "resets");
    write_manifest(&dir, "resets", cfg, json!({ "strategies": ResetStrategy::ALL }))?;
    let mut jobs = Vec::new();
    for r in ResetStrategy::ALL {
        for &seed in &cfg.experiment.seeds {
            let mut job = seeded_job(cfg, format!("{r}-s{seed}"), seed, vec![]);
            job.cfg.nil.reset_strategy = r;
            jobs.push(job);
        }
    }
    let data = into_data(&jobs, execute_all(&jobs, &dir, cfg.experiment.jobs, opts)?)?;
    let results: Vec<Result<RunData>> = data.iter().cloned().map(Ok).collect();
    write_run_tables(&dir, &jobs, &results)?;
    let mut sink = CsvSink::create(&dir, "summary.csv", RESETS_HEADER)?;
    for (job, d) in jobs.iter().zip(&data) {
        sink.row([
            job.run_id.clone(),
            job.cfg.nil.reset_strategy.to_string(),
            job.seed().to_string(),
            d.rho_last(SUMMARY_WINDOW).to_string(),
            d.accuracy_last(SUMMARY_WINDOW).to_string(),
            d.final_types().to_string(),
            fmt_opt(d.g_threshold()),
        ])?;
    }
    sink.finish()?;
    plot(&dir, "generations.csv", "rho.svg", line("generation", "rho_greedy", "reset_strategy", "mean greedy rho"))?;
    plot(
        &dir,
        "generations.csv",
        "accuracy.svg",
        line("generation", "end_accuracy", "reset_strategy", "mean accuracy"),
    )?;
    Ok(dir)
}

pub const ZEROSHOT_RUNS_HEADER: &[&str] = &[
    "run_id",
    "valid_size",
    "reset_strategy",
    "seed",
    "train_accuracy",
    "valid_accuracy",
    "rho_last3",
];

/// Train and validation accuracy for every held-out size and reset strategy.
pub fn preset_zeroshot(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let dir = preset_dir(cfg, "zeroshot");
    write_manifest(&dir, "zeroshot", cfg, json!({}))?;
    let z = &cfg.zeroshot;
    let mut jobs = Vec::new();
    for &size in &z.valid_sizes {
        for &r in &z.strategies {
            for &seed in &cfg.experiment.seeds {
                let mut job = seeded_job(cfg, format!("v{size}-{r}-s{seed}"), seed, vec![]);
                job.cfg.nil.valid_size = size;
                job.cfg.nil.reset_strategy = r;
                job.cfg.validate()?;
                jobs.push(job);
            }
        }
    }
    let data = into_data(&jobs, execute_all(&jobs, &dir, cfg.experiment.jobs, opts)?)?;
    let results: Vec<Result<RunData>> = data.iter().cloned().map(Ok).collect();
    write_run_tables(&dir, &jobs, &results)?;

    let mut sink = CsvSink::create(&dir, "zeroshot_runs.csv", ZEROSHOT_RUNS_HEADER)?;
    for (job, d) in jobs.iter().zip(&data) {
        sink.row([
            job.run_id.clone(),
            job.cfg.nil.valid_size.to_string(),
            job.cfg.nil.reset_strategy.to_string(),
            job.seed().to_string(),
            d.accuracy_last(SUMMARY_WINDOW).to_string(),
            fmt_opt(d.valid_last(SUMMARY_WINDOW)),
            d.rho_last(SUMMARY_WINDOW).to_string(),
        ])?;
    }
    sink.finish()?;

    // One row per strategy, a train and a valid column per held-out size.
    let mut header = vec!["reset_strategy".to_string()];
    for size in &z.valid_sizes {
        header.push(format!("train_{size}"));
        header.push(format!("valid_{size}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = CsvSink::create(&dir, "zeroshot_table.csv", &header_refs)?;
    for &r in &z.strategies {
        let mut row = vec![r.to_string()];
        for &size in &z.valid_sizes {
            let cell: Vec<&RunData> = jobs
                .iter()
                .zip(&data)
                .filter(|(j, _)| j.cfg.nil.reset_strategy == r && j.cfg.nil.valid_size == size)
                .map(|(_, d)| d)
                .collect();
            let train: Vec<f64> = cell.iter().map(|d| d.accuracy_last(SUMMARY_WINDOW)).collect();
            let valid: Vec<f64> = cell.iter().filter_map(|d| d.valid_last(SUMMARY_WINDOW)).collect();
            row.push(fmt_opt(mean(&train)));
            row.push(fmt_opt(mean(&valid)));
        }
        table.row(row)?;
    }
    table.finish()?;
    Ok(dir)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub const ROBUST_HEADER: &[&str] = &[
    "run_id",
    "variant",
    "vocab_size",
    "message_length",
    "reset_strategy",
    "seed",
    "rho_last3",
    "accuracy_last3",
    "message_types",
    "g_threshold",
];

/// Robustness variants, each under the configured reset strategies.
pub fn preset_robust(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let dir = preset_dir(cfg, "robust");
    write_manifest(&dir, "robust", cfg, json!({}))?;
    let rb = &cfg.robust;
    let mut variants: Vec<(String, ExperimentConfig, RobustVariant)> = Vec::new();
    for &v in &rb.variants {
        match v {
            RobustVariant::Grid => {
                for &vocab in &rb.vocab_sizes {
                    for &len in &rb.message_lengths {
                        let mut c = cfg.clone();
                        c.space.vocab_size = vocab;
                        c.space.message_length = len;
                        variants.push((format!("grid-v{vocab}-l{len}"), c, v));
                    }
                }
            }
            RobustVariant::DegenerateInit => {
                let mut c = cfg.clone();
                c.nil.degenerate_init = true;
                variants.push((v.as_str().into(), c, v));
            }
            RobustVariant::DegenerateMixed => {
                let mut c = cfg.clone();
                c.nil.degenerate_init = true;
                c.nil.degenerate_mix_fraction = Some(rb.mix_fraction);
                variants.push((v.as_str().into(), c, v));
            }
            RobustVariant::NoListenerPretrain => {
                let mut c = cfg.clone();
                c.nil.pretrain_listener_batches = 0;
                variants.push((v.as_str().into(), c, v));
            }
        }
    }
    let mut jobs = Vec::new();
    for (name, c, v) in &variants {
        for &r in &rb.strategies {
            for &seed in &cfg.experiment.seeds {
                let mut job = seeded_job(c, format!("{name}-{r}-s{seed}"), seed, vec![("variant", v.as_str().into())]);
                job.cfg.nil.reset_strategy = r;
                job.cfg.validate()?;
                jobs.push(job);
            }
        }
    }
    let data = into_data(&jobs, execute_all(&jobs, &dir, cfg.experiment.jobs, opts)?)?;
    let results: Vec<Result<RunData>> = data.iter().cloned().map(Ok).collect();
    write_run_tables(&dir, &jobs, &results)?;
    let mut sink = CsvSink::create(&dir, "robust.csv", ROBUST_HEADER)?;
    for (job, d) in jobs.iter().zip(&data) {
        sink.row([
            job.run_id.clone(),
            job.label("variant").unwrap_or_default().to_string(),
            job.cfg.space.vocab_size.to_string(),
            job.cfg.space.message_length.to_string(),
            job.cfg.nil.reset_strategy.to_string(),
            job.seed().to_string(),
            d.rho_last(SUMMARY_WINDOW).to_string(),
            d.accuracy_last(SUMMARY_WINDOW).to_string(),
            d.final_types().to_string(),
            fmt_opt(d.g_threshold()),
        ])?;
    }
    sink.finish()?;
    plot(&dir, "generations.csv", "rho.svg", line("generation", "rho_greedy", "run_id", "greedy rho"))?;
    Ok(dir)
}

pub const ANALYSIS_HEADER: &[&str] = &[
    "run_id",
    "cell",
    "seed",
    "I_a",
    "I_b",
    "axis_value",
    "rho_last10_mean",
    "valid_accuracy",
    "r_contribution",
    "status",
];

/// Cells of a sweep: `(cell label, configuration)`.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>> {
    let sw = &cfg.sweep;
    if sw.random_cells > 0 {
        if cfg.nil.valid_size == 0 {
            return Err(Error::Config("a randomized sweep needs nil.valid_size > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.experiment.seeds[0]);
        return Ok((0..sw.random_cells)
            .map(|k| {
                let mut c = cfg.clone();
                c.nil.pretrain_speaker_rounds = rng.gen_range(sw.speaker_rounds_range[0]..=sw.speaker_rounds_range[1]);
                c.nil.pretrain_listener_batches =
                    rng.gen_range(sw.listener_batches_range[0]..=sw.listener_batches_range[1]);
                (format!("r{k}"), c)
            })
            .collect());
    }
    let axis = sw
        .axis
        .ok_or_else(|| Error::Config("sweep needs an axis or random_cells".into()))?;
    if sw.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    sw.values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            axis.apply(&mut c, v)?;
            Ok((format!("{}={v}", axis.as_str()), c))
        })
        .collect()
}

/// Grid or randomized sweep. Failed runs appear in `analysis.csv` with an error status.
pub fn preset_sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let dir = preset_dir(cfg, "sweep");
    let cells = sweep_cells(cfg)?;
    write_manifest(&dir, "sweep", cfg, json!({ "cells": cells.iter().map(|c| &c.0).collect::<Vec<_>>() }))?;
    let mut jobs = Vec::new();
    for (k, (label, c)) in cells.iter().enumerate() {
        for &seed in &cfg.experiment.seeds {
            jobs.push(seeded_job(
                c,
                format!("c{k}-s{seed}"),
                seed,
                vec![("cell", label.clone())],
            ));
        }
    }
    let results = execute_all(&jobs, &dir, cfg.experiment.jobs, opts)?;
    write_run_tables(&dir, &jobs, &results)?;

    let w = cfg.sweep.window;
    let pairs: Vec<Option<(f64, f64)>> = results
        .iter()
        .map(|r| r.as_ref().ok().and_then(|d| d.valid_last(w).map(|v| (d.rho_last(w), v))))
        .collect();
    let ok: Vec<(f64, f64)> = pairs.iter().flatten().copied().collect();
    let contributions = r_contributions(&ok);
    let mut next = contributions.iter();

    let mut sink = CsvSink::create(&dir, "analysis.csv", ANALYSIS_HEADER)?;
    for ((job, res), pair) in jobs.iter().zip(&results).zip(&pairs) {
        let axis_value = job
            .label("cell")
            .and_then(|l| l.split_once('='))
            .map(|(_, v)| v.to_string())
            .unwrap_or_default();
        let (rho, valid, contrib, status) = match (res, pair) {
            (Err(e), _) => (String::new(), String::new(), String::new(), format!("error: {e}")),
            (Ok(d), Some(_)) => (
                d.rho_last(w).to_string(),
                fmt_opt(d.valid_last(w)),
                fmt_opt(next.next().copied().flatten()),
                "ok".into(),
            ),
            (Ok(d), None) => (d.rho_last(w).to_string(), String::new(), String::new(), "ok".into()),
        };
        sink.row([
            job.run_id.clone(),
            job.label("cell").unwrap_or_default().to_string(),
            job.seed().to_string(),
            job.cfg.nil.pretrain_speaker_rounds.to_string(),
            job.cfg.nil.pretrain_listener_batches.to_string(),
            axis_value,
            rho,
            valid,
            contrib,
            status,
        ])?;
    }
    sink.finish()?;

    let mut corr = CsvSink::create(&dir, "correlation.csv", &["runs", "pearson_r"])?;
    corr.row([ok.len().to_string(), fmt_opt(pearson_of(&ok))])?;
    corr.finish()?;
    if !ok.is_empty() {
        let mut p = PlotSpec::new(ChartKind::Scatter, "rho_last10_mean", "valid_accuracy");
        p.title = Some("rho vs validation accuracy".into());
        plot(&dir, "analysis.csv", "rho_vs_valid.svg", p)?;
    }
    plot(&dir, "generations.csv", "rho.svg", line("generation", "rho_greedy", "run_id", "greedy rho"))?;
    Ok(dir)
}

fn pearson_of(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    pearson(&x, &y)
}

/// Per-run terms `z_x z_y / (n - 1)`, which sum to Pearson's r.
pub fn r_contributions(pairs: &[(f64, f64)]) -> Vec<Option<f64>> {
    let n = pairs.len();
    if n < 3 {
        return vec![None; n];
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        (m, sd)
    };
    let ((mx, sx), (my, sy)) = (stats(&x), stats(&y));
    if sx == 0.0 || sy == 0.0 {
        return vec![None; n];
    }
    pairs
        .iter()
        .map(|(a, b)| Some((a - mx) / sx * (b - my) / sy / (n - 1) as f64))
        .collect()
}

pub const SPEED_SPEAKER_HEADER: &[&str] = &["seed", "language", "language_rho", "step", "accuracy", "rho_greedy"];
pub const SPEED_LISTENER_HEADER: &[&str] = &["seed", "language", "batch", "accuracy"];
pub const SPEED_SUMMARY_HEADER: &[&str] = &[
    "seed",
    "language",
    "language_rho",
    "speaker_steps_to_90",
    "rho_peak",
    "rho_final",
    "listener_batches_to_80",
];

/// Listener accuracy is smoothed over this many batches before thresholding.
pub const LISTENER_SMOOTHING: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTrace {
    pub seed: u64,
    pub language: String,
    pub language_rho: f64,
    /// `(step, sequence accuracy, greedy ρ)` every `eval_every` steps.
    pub speaker: Vec<(usize, f64, f64)>,
    pub speaker_steps_to_90: Option<usize>,
    pub listener: Vec<f64>,
    pub listener_batches_to_80: Option<usize>,
}

impl SpeedTrace {
    pub fn rho_peak(&self) -> f64 {
        self.speaker.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rho_final(&self) -> f64 {
        self.speaker.last().map_or(f64::NAN, |p| p.2)
    }
}

/// First batch (1-based) whose trailing mean over `window` batches reaches `level`.
pub fn batches_to_level(curve: &[f64], level: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    (window..=curve.len())
        .find(|&end| curve[end - window..end].iter().sum::<f64>() / window as f64 >= level)
}

/// Trains a fresh speaker on `lang` and then a fresh listener against it. Every
/// language of a seed sees the same initial weights and batch randomness.
pub fn speed_trace(cfg: &ExperimentConfig, seed: u64, name: &str, lang: &Language) -> Result<SpeedTrace> {
    let (spec, sp) = (&cfg.space, &cfg.speed);
    let kind = cfg.nil.correlation;
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    let mut a = SpeakerAgent::new(spec, &cfg.net, &mut init);
    let mut b = ListenerAgent::new(spec, &cfg.net, &mut init);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 << 32));
    let data = Dataset::from_language(lang);
    let objects: Vec<usize> = (0..spec.object_count()).collect();

    let mut speaker = Vec::new();
    let mut steps_to_90 = None;
    for step in 1..=sp.speaker_steps {
        pretrain_speaker_batch(&mut a, &data, &cfg.train, &mut rng)?;
        let needs_acc = steps_to_90.is_none() || step % sp.eval_every == 0 || step == sp.speaker_steps;
        if !needs_acc {
            continue;
        }
        let acc = sequence_accuracy(&a, lang, &objects);
        if steps_to_90.is_none() && acc >= 0.9 {
            steps_to_90 = Some(step);
        }
        if step % sp.eval_every == 0 || step == sp.speaker_steps {
            let rho = topological_similarity(spec, &a.greedy_language(), kind)?;
            speaker.push((step, acc, rho));
        }
    }
    let listener = pretrain_listener(&a, &mut b, &cfg.train, sp.listener_batches, &objects, &mut rng)?;
    Ok(SpeedTrace {
        seed,
        language: name.into(),
        language_rho: topological_similarity(spec, lang, kind)?,
        speaker,
        speaker_steps_to_90: steps_to_90,
        listener_batches_to_80: batches_to_level(&listener, 0.8, LISTENER_SMOOTHING),
        listener,
    })
}

/// The languages compared under one seed: compositional, its permutation, and
/// any configured language files.
pub fn speed_languages(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(String, Language)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = generate_compositional(&cfg.space, &mut rng)?;
    let lo = permute_language(&hi, &mut rng);
    let mut out = vec![("compositional".to_string(), hi), ("permuted".to_string(), lo)];
    for path in &cfg.speed.languages {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        out.push((format!("file:{name}"), Language::load(&cfg.space, path)?));
    }
    Ok(out)
}

/// Learning speed of speakers and listeners on languages of different ρ.
pub fn preset_speed(cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    let dir = preset_dir(cfg, "speed");
    write_manifest(&dir, "speed", cfg, json!({}))?;
    let mut tasks = Vec::new();
    for &seed in &cfg.experiment.seeds {
        for (name, lang) in speed_languages(cfg, seed)? {
            tasks.push((seed, name, lang));
        }
    }
    let traces: Vec<SpeedTrace> = pool(cfg.experiment.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|(seed, name, lang)| {
                let t = speed_trace(cfg, *seed, name, lang);
                if !opts.quiet {
                    if let Ok(t) = &t {
                        eprintln!(
                            "[speed s{seed} {name}] speaker 90% at {:?}, listener 80% at {:?}",
                            t.speaker_steps_to_90, t.listener_batches_to_80
                        );
                    }
                }
                t
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut sp = CsvSink::create(&dir, "speed_speaker.csv", SPEED_SPEAKER_HEADER)?;
    let mut li = CsvSink::create(&dir, "speed_listener.csv", SPEED_LISTENER_HEADER)?;
    let mut su = CsvSink::create(&dir, "speed_summary.csv", SPEED_SUMMARY_HEADER)?;
    for t in &traces {
        for &(step, acc, rho) in &t.speaker {
            sp.row([t.seed.to_string(), t.language.clone(), t.language_rho.to_string(), step.to_string(), acc.to_string(), rho.to_string()])?;
        }
        for (k, acc) in t.listener.iter().enumerate() {
            li.row([t.seed.to_string(), t.language.clone(), (k + 1).to_string(), acc.to_string()])?;
        }
        su.row([
            t.seed.to_string(),
            t.language.clone(),
            t.language_rho.to_string(),
            fmt_opt(t.speaker_steps_to_90),
            t.rho_peak().to_string(),
            t.rho_final().to_string(),
            fmt_opt(t.listener_batches_to_80),
        ])?;
    }
    sp.finish()?;
    li.finish()?;
    su.finish()?;
    plot(&dir, "speed_speaker.csv", "speaker_accuracy.svg", line("step", "accuracy", "language", "speaker sequence accuracy"))?;
    plot(&dir, "speed_speaker.csv", "speaker_rho.svg", line("step", "rho_greedy", "language", "speaker greedy rho"))?;
    plot(&dir, "speed_listener.csv", "listener_accuracy.svg", line("batch", "accuracy", "language", "listener accuracy"))?;
    Ok(dir)
}

/// Dispatches a preset by name.
pub fn run_preset(name: &str, cfg: &ExperimentConfig, opts: RunOptions) -> Result<PathBuf> {
    match name {
        "run" => preset_run(cfg, opts),
        "resets" => preset_resets(cfg, opts),
        "sweep" => preset_sweep(cfg, opts),
        "speed" => preset_speed(cfg, opts),
        "zeroshot" => preset_zeroshot(cfg, opts),
        "robust" => preset_robust(cfg, opts),
        other => Err(Error::Config(format!("unknown preset `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contributions_sum_to_pearson() {
        let pairs = vec![(0.1, 0.3), (0.5, 0.4), (0.9, 0.95), (0.4, 0.2), (0.7, 0.8)];
        let total: f64 = r_contributions(&pairs).iter().map(|c| c.unwrap()).sum();
        assert!((total - pearson_of(&pairs).unwrap()).abs() < 1e-12);
        assert_eq!(r_contributions(&pairs[..2]), vec![None, None]);
    }

    #[test]
    fn smoothed_threshold() {
        let curve = [0.2, 0.9, 0.9, 0.9, 0.7, 0.9];
        assert_eq!(batches_to_level(&curve, 0.8, 1), Some(2));
        assert_eq!(batches_to_level(&curve, 0.8, 3), Some(4));
        assert_eq!(batches_to_level(&curve, 0.95, 2), None);
    }

    #[test]
    fn random_sweep_cells_are_reproducible_and_in_range() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.random_cells = 6;
        assert!(sweep_cells(&cfg).is_err());
        cfg.nil.valid_size = 8;
        let a = sweep_cells(&cfg).unwrap();
        let b = sweep_cells(&cfg).unwrap();
        assert_eq!(a.len(), 6);
        for ((la, ca), (lb, cb)) in a.iter().zip(&b) {
            assert_eq!((la, ca), (lb, cb));
            assert!((60..=4000).contains(&ca.nil.pretrain_speaker_rounds));
            assert!((5..=200).contains(&ca.nil.pretrain_listener_batches));
        }
    }

    #[test]
    fn grid_sweep_covers_every_value() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.axis = Some(super::super::config::SweepAxis::PretrainSpeakerRounds);
        cfg.sweep.values = vec!["100".into(), "1500".into(), "8000".into()];
        let cells = sweep_cells(&cfg).unwrap();
        let rounds: Vec<usize> = cells.iter().map(|c| c.1.nil.pretrain_speaker_rounds).collect();
        assert_eq!(rounds, vec![100, 1500, 8000]);
    }
}

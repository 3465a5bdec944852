//! Result files. Every writer is created after the run's manifest exists.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::RhoHistogram;
use crate::nil::{GenerationRecord, PhasePoint, ResetStrategy};
use crate::{Error, Result};

use super::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "NIL_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub preset: &'a str,
    pub code_version: &'a str,
    pub config: &'a ExperimentConfig,
    /// Preset-specific settings beyond the shared configuration.
    pub extra: serde_json::Value,
}

/// Creates `dir` and writes the manifest into it.
pub fn write_manifest(dir: &Path, preset: &str, config: &ExperimentConfig, extra: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = Manifest {
        preset,
        code_version: env!("CARGO_PKG_VERSION"),
        config,
        extra,
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST))?);
    serde_json::to_writer_pretty(&mut w, &m)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn require_manifest(dir: &Path) -> Result<()> {
    if dir.join(MANIFEST).is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} has no manifest; refusing to write results", dir.display())))
    }
}

/// A CSV file with a fixed header.
pub struct CsvSink {
    w: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        require_manifest(dir)?;
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(header)?;
        Ok(CsvSink { w })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub const GENERATIONS_HEADER: &[&str] = &[
    "run_id",
    "seed",
    "reset_strategy",
    "generation",
    "end_accuracy",
    "rho_greedy",
    "rho_expected_mc",
    "dataset_rho",
    "message_types",
    "rho_expected_se",
    "valid_accuracy",
];

pub fn generation_row(run_id: &str, seed: u64, reset: ResetStrategy, r: &GenerationRecord) -> Vec<String> {
    vec![
        run_id.to_string(),
        seed.to_string(),
        reset.to_string(),
        r.generation.to_string(),
        r.end_accuracy.to_string(),
        r.rho_greedy.to_string(),
        r.rho_expected_mc.to_string(),
        r.dataset_rho.to_string(),
        r.message_type_count.to_string(),
        r.rho_expected_se.to_string(),
        r.valid_accuracy.map(|v| v.to_string()).unwrap_or_default(),
    ]
}

pub const ROUNDS_HEADER: &[&str] = &["run_id", "generation", "phase", "iteration", "accuracy", "rho_greedy"];

pub fn round_row(run_id: &str, p: &PhasePoint) -> Vec<String> {
    vec![
        run_id.to_string(),
        p.generation.to_string(),
        p.phase.as_str().to_string(),
        p.point.iteration.to_string(),
        p.point.accuracy.to_string(),
        p.point.rho_greedy.to_string(),
    ]
}

pub const HISTOGRAM_HEADER: &[&str] = &["run_id", "generation", "bin_low", "bin_high", "count"];

pub fn histogram_rows(run_id: &str, h: &RhoHistogram) -> Vec<Vec<String>> {
    let generation = h.generation.map(|g| g.to_string()).unwrap_or_default();
    h.counts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            vec![
                run_id.to_string(),
                generation.clone(),
                h.edges[k].to_string(),
                h.edges[k + 1].to_string(),
                c.to_string(),
            ]
        })
        .collect()
}

/// Reads a CSV into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

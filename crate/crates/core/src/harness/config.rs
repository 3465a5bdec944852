//! Experiment configuration: TOML with one section per module.
//!
//! ```toml
//! [experiment]
//! preset = "run"
//! seeds = [0, 1, 2, 3, 4]
//! scale = 0.25
//!
//! [space]
//! vocab_size = 16
//!
//! [nil]
//! reset_strategy = "none"
//! ```
//!
//! Missing keys take their defaults. `scale` multiplies the full-scale number of
//! generations and interacting rounds unless the file sets them explicitly.
//! Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::NetConfig;
use crate::nil::{NilConfig, ResetStrategy};
use crate::objectspace::SpaceSpec;
use crate::training::TrainConfig;
use crate::{Error, Result};

pub const FULL_GENERATIONS: usize = 80;
pub const FULL_INTERACT_ROUNDS: usize = 4000;
pub const DESK_SCALE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub preset: String,
    pub seeds: Vec<u64>,
    pub scale: f64,
    /// Directory that receives the run directories; falls back to the output root.
    pub output_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    /// Worker threads for independent runs; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            preset: "run".into(),
            seeds: (0..5).collect(),
            scale: DESK_SCALE,
            output_dir: None,
            run_id: None,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default = "default_space")]
    pub space: SpaceSpec,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub nil: NilConfig,
    #[serde(default)]
    pub speed: SpeedSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub zeroshot: ZeroshotSection,
    #[serde(default)]
    pub robust: RobustSection,
}

/// Learning-speed comparison between languages of different ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedSection {
    pub speaker_steps: usize,
    pub listener_batches: usize,
    pub eval_every: usize,
    /// Extra language files, e.g. greedy languages saved by earlier runs.
    pub languages: Vec<PathBuf>,
}

impl Default for SpeedSection {
    fn default() -> Self {
        SpeedSection {
            speaker_steps: 4000,
            listener_batches: 600,
            eval_every: 20,
            languages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PretrainSpeakerRounds,
    PretrainListenerBatches,
    VocabSize,
    MessageLength,
    ValidSize,
    ResetStrategy,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::PretrainSpeakerRounds,
        SweepAxis::PretrainListenerBatches,
        SweepAxis::VocabSize,
        SweepAxis::MessageLength,
        SweepAxis::ValidSize,
        SweepAxis::ResetStrategy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::PretrainSpeakerRounds => "pretrain_speaker_rounds",
            SweepAxis::PretrainListenerBatches => "pretrain_listener_batches",
            SweepAxis::VocabSize => "vocab_size",
            SweepAxis::MessageLength => "message_length",
            SweepAxis::ValidSize => "valid_size",
            SweepAxis::ResetStrategy => "reset_strategy",
        }
    }

    /// Sets this axis of `cfg` to `value`.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: &str) -> Result<()> {
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{} expects an integer, got `{value}`", self.as_str())))
        };
        match self {
            SweepAxis::PretrainSpeakerRounds => cfg.nil.pretrain_speaker_rounds = int()?,
            SweepAxis::PretrainListenerBatches => cfg.nil.pretrain_listener_batches = int()?,
            SweepAxis::VocabSize => cfg.space.vocab_size = int()?,
            SweepAxis::MessageLength => cfg.space.message_length = int()?,
            SweepAxis::ValidSize => cfg.nil.valid_size = int()?,
            SweepAxis::ResetStrategy => cfg.nil.reset_strategy = value.parse()?,
        }
        Ok(())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = match s {
            "I_a" | "ia" => "pretrain_speaker_rounds",
            "I_b" | "ib" => "pretrain_listener_batches",
            other => other,
        };
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s || a.as_str().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis `{s}`")))
    }
}

/// Either a grid over one axis or `random_cells` cells with I_a and I_b drawn
/// uniformly from the given inclusive ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: Option<SweepAxis>,
    pub values: Vec<String>,
    pub random_cells: usize,
    pub speaker_rounds_range: [usize; 2],
    pub listener_batches_range: [usize; 2],
    /// Trailing generations averaged into the run-level ρ and validation accuracy.
    pub window: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: None,
            values: Vec::new(),
            random_cells: 0,
            speaker_rounds_range: [60, 4000],
            listener_batches_range: [5, 200],
            window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZeroshotSection {
    pub valid_sizes: Vec<usize>,
    pub strategies: Vec<ResetStrategy>,
}

impl Default for ZeroshotSection {
    fn default() -> Self {
        ZeroshotSection {
            valid_sizes: vec![0, 8, 16, 32],
            strategies: ResetStrategy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustVariant {
    /// Every vocabulary size crossed with every message length.
    Grid,
    DegenerateInit,
    /// Degenerate initialization plus degenerate pairs mixed into each dataset.
    DegenerateMixed,
    NoListenerPretrain,
}

impl RobustVariant {
    pub const ALL: [RobustVariant; 4] = [
        RobustVariant::Grid,
        RobustVariant::DegenerateInit,
        RobustVariant::DegenerateMixed,
        RobustVariant::NoListenerPretrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RobustVariant::Grid => "grid",
            RobustVariant::DegenerateInit => "degenerate_init",
            RobustVariant::DegenerateMixed => "degenerate_mixed",
            RobustVariant::NoListenerPretrain => "no_listener_pretrain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustSection {
    pub variants: Vec<RobustVariant>,
    pub vocab_sizes: Vec<usize>,
    pub message_lengths: Vec<usize>,
    pub mix_fraction: f64,
    pub strategies: Vec<ResetStrategy>,
}

impl Default for RobustSection {
    fn default() -> Self {
        RobustSection {
            variants: RobustVariant::ALL.to_vec(),
            vocab_sizes: vec![8, 16],
            message_lengths: vec![2, 3],
            mix_fraction: 0.5,
            strategies: vec![ResetStrategy::Both, ResetStrategy::None],
        }
    }
}

fn default_space() -> SpaceSpec {
    SpaceSpec {
        n_attributes: 2,
        n_values: 8,
        message_length: 2,
        vocab_size: 8,
    }
}

pub fn scaled(full: usize, scale: f64) -> usize {
    ((full as f64 * scale).round() as usize).max(1)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::at_scale(DESK_SCALE)
    }
}

impl ExperimentConfig {
    pub fn at_scale(scale: f64) -> Self {
        let mut cfg = ExperimentConfig {
            experiment: ExperimentSection {
                scale,
                ..ExperimentSection::default()
            },
            space: default_space(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            nil: NilConfig::default(),
            speed: SpeedSection::default(),
            sweep: SweepSection::default(),
            zeroshot: ZeroshotSection::default(),
            robust: RobustSection::default(),
        };
        cfg.apply_scale(scale);
        cfg
    }

    pub fn apply_scale(&mut self, scale: f64) {
        self.experiment.scale = scale;
        self.nil.generations = scaled(FULL_GENERATIONS, scale);
        self.nil.interact_rounds = scaled(FULL_INTERACT_ROUNDS, scale);
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: toml::Table = text.parse()?;
        let scale = match file.get("experiment").and_then(|e| e.get("scale")) {
            Some(v) => v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::Config("experiment.scale must be a number".into()))?,
            None => DESK_SCALE,
        };
        let base = ExperimentConfig::at_scale(scale);
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, file);
        let cfg: ExperimentConfig = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.nil.validate(&self.space)?;
        if !(self.experiment.scale > 0.0 && self.experiment.scale.is_finite()) {
            return Err(Error::Config("scale must be positive".into()));
        }
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.train.candidates > self.space.object_count() {
            return Err(Error::Config(format!(
                "{} candidates exceed the {} objects",
                self.train.candidates,
                self.space.object_count()
            )));
        }
        if let Some(axis) = self.sweep.axis {
            for v in &self.sweep.values {
                let mut probe = self.clone();
                probe.sweep.axis = None;
                axis.apply(&mut probe, v)?;
                probe.validate()?;
            }
        }
        for [lo, hi] in [self.sweep.speaker_rounds_range, self.sweep.listener_batches_range] {
            if lo > hi {
                return Err(Error::Config(format!("empty sweep range [{lo}, {hi}]")));
            }
        }
        if self.sweep.window == 0 {
            return Err(Error::Config("sweep window must be at least 1".into()));
        }
        if !(self.robust.mix_fraction > 0.0 && self.robust.mix_fraction <= 1.0) {
            return Err(Error::Config("robust mix_fraction must lie in (0, 1]".into()));
        }
        if self.speed.eval_every == 0 {
            return Err(Error::Config("speed eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_desk_scale_table_values() {
        let c = ExperimentConfig::default();
        assert_eq!((c.space.n_attributes, c.space.n_values, c.space.message_length, c.space.vocab_size), (2, 8, 2, 8));
        assert_eq!(c.net.hidden_size, 128);
        assert_eq!((c.train.batch_size, c.train.candidates, c.train.lr), (64, 5, 1e-3));
        assert_eq!((c.nil.generations, c.nil.interact_rounds), (20, 1000));
        assert_eq!(
            (c.nil.pretrain_speaker_rounds, c.nil.pretrain_listener_batches, c.nil.transmit_pairs),
            (1500, 160, 1000)
        );
        assert_eq!(c.experiment.seeds.len(), 5);
        let full = ExperimentConfig::at_scale(1.0);
        assert_eq!((full.nil.generations, full.nil.interact_rounds), (80, 4000));
    }

    #[test]
    fn file_overrides_and_scale() {
        let c = ExperimentConfig::from_toml_str(
            "[experiment]\nscale = 1.0\n[space]\nvocab_size = 16\n[nil]\nreset_strategy = \"none\"\ninteract_rounds = 7\n",
        )
        .unwrap();
        assert_eq!(c.space.vocab_size, 16);
        assert_eq!(c.space.n_values, 8);
        assert_eq!(c.nil.reset_strategy, ResetStrategy::None);
        assert_eq!((c.nil.generations, c.nil.interact_rounds), (80, 7));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[nil]\ngenerashuns = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[nets]\nhidden_size = 3\n").is_err());
        let e = ExperimentConfig::from_toml_str("[space]\nvocab_size = 1\n").unwrap_err();
        assert!(e.is_config_error());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }
}

//! Generational loop: reset, learn from the previous generation's data,
//! interact, transmit.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ListenerAgent, NetConfig, SpeakerAgent};
use crate::analysis::{make_validation_split, mean_and_se, message_type_count, sample_rhos, ValidationSplit};
use crate::language::{generate_degenerate, mix_pairs, random_dataset, DataPair, Dataset, Language};
use crate::objectspace::{Message, SpaceSpec};
use crate::topsim::{topological_similarity, topsim_of_dataset, CorrelationKind};
use crate::training::{
    evaluate_accuracy, interact, pretrain_listener, pretrain_speaker_batch, EvalPoint, TrainConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetStrategy {
    #[default]
    Both,
    SpeakerOnly,
    ListenerOnly,
    None,
}

impl ResetStrategy {
    pub const ALL: [ResetStrategy; 4] = [
        ResetStrategy::Both,
        ResetStrategy::SpeakerOnly,
        ResetStrategy::ListenerOnly,
        ResetStrategy::None,
    ];

    pub fn resets_speaker(self) -> bool {
        matches!(self, ResetStrategy::Both | ResetStrategy::SpeakerOnly)
    }

    pub fn resets_listener(self) -> bool {
        matches!(self, ResetStrategy::Both | ResetStrategy::ListenerOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResetStrategy::Both => "both",
            ResetStrategy::SpeakerOnly => "speaker_only",
            ResetStrategy::ListenerOnly => "listener_only",
            ResetStrategy::None => "none",
        }
    }
}

impl fmt::Display for ResetStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResetStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ResetStrategy::ALL
            .into_iter()
            .find(|r| r.as_str() == s || r.as_str().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown reset strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NilConfig {
    pub generations: usize,
    pub pretrain_speaker_rounds: usize,
    pub pretrain_listener_batches: usize,
    pub interact_rounds: usize,
    pub transmit_pairs: usize,
    pub reset_strategy: ResetStrategy,
    pub degenerate_init: bool,
    pub degenerate_mix_fraction: Option<f64>,
    pub valid_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub mc_samples: usize,
    /// Greedy rounds used for the end-of-generation accuracy.
    pub eval_trials: usize,
    pub correlation: CorrelationKind,
}

impl Default for NilConfig {
    fn default() -> Self {
        NilConfig {
            generations: 80,
            pretrain_speaker_rounds: 1500,
            pretrain_listener_batches: 160,
            interact_rounds: 4000,
            transmit_pairs: 1000,
            reset_strategy: ResetStrategy::Both,
            degenerate_init: false,
            degenerate_mix_fraction: None,
            valid_size: 0,
            seed: 0,
            eval_every: 20,
            mc_samples: 50,
            eval_trials: 1000,
            correlation: CorrelationKind::Spearman,
        }
    }
}

impl NilConfig {
    pub fn validate(&self, spec: &SpaceSpec) -> Result<()> {
        if self.transmit_pairs == 0 {
            return Err(Error::Config("transmit_pairs must be at least 1".into()));
        }
        if self.valid_size >= spec.object_count() {
            return Err(Error::Config(format!(
                "valid_size {} leaves no training objects out of {}",
                self.valid_size,
                spec.object_count()
            )));
        }
        if let Some(f) = self.degenerate_mix_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("degenerate_mix_fraction must lie in (0, 1], got {f}")));
            }
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// End-of-generation statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 1-based.
    pub generation: usize,
    /// Greedy accuracy with targets and distractors from the training objects.
    pub end_accuracy: f64,
    /// Greedy accuracy on held-out targets, distractors from all objects.
    pub valid_accuracy: Option<f64>,
    /// ρ of the greedy language over all objects.
    pub rho_greedy: f64,
    pub rho_expected_mc: f64,
    pub rho_expected_se: f64,
    pub message_type_count: usize,
    /// ρ of the dataset transmitted to the next generation.
    pub dataset_rho: f64,
    /// Seconds; excluded from CSV output so results stay reproducible.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ListenerPretrain,
    Interact,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::ListenerPretrain => "listener_pretrain",
            Phase::Interact => "interact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub generation: usize,
    pub phase: Phase,
    pub point: EvalPoint,
}

/// Everything a generation produces; handed to the observer of [`run_nil`].
#[derive(Debug, Clone)]
pub struct GenerationArtifacts<'a> {
    pub record: &'a GenerationRecord,
    pub points: &'a [PhasePoint],
    pub speaker: &'a SpeakerAgent,
    pub listener: &'a ListenerAgent,
    pub greedy_language: &'a Language,
    pub rho_samples: &'a [f64],
    /// Dataset the generation learned from.
    pub dataset: &'a Dataset,
    pub next_dataset: &'a Dataset,
}

pub struct NilState {
    pub speaker: SpeakerAgent,
    pub listener: ListenerAgent,
    pub dataset: Dataset,
    pub generation: usize,
}

/// Fresh agents for the roles the strategy resets; `None` where the old agent is kept.
pub fn reset_agents<R: Rng + ?Sized>(
    strategy: ResetStrategy,
    spec: &SpaceSpec,
    cfg: &NetConfig,
    rng: &mut R,
) -> (Option<SpeakerAgent>, Option<ListenerAgent>) {
    let a = strategy.resets_speaker().then(|| SpeakerAgent::new(spec, cfg, rng));
    let b = strategy.resets_listener().then(|| ListenerAgent::new(spec, cfg, rng));
    (a, b)
}

/// `pairs` object-message pairs: objects uniform over `objects`, messages sampled from the speaker.
pub fn transmit<R: Rng + ?Sized>(a: &SpeakerAgent, objects: &[usize], pairs: usize, rng: &mut R) -> Result<Dataset> {
    if objects.is_empty() {
        return Err(Error::InsufficientObjects { needed: 1, available: 0 });
    }
    if pairs == 0 {
        return Err(Error::Config("transmit_pairs must be at least 1".into()));
    }
    let spec = *a.spec();
    let picks: Vec<usize> = (0..pairs).map(|_| objects[rng.gen_range(0..objects.len())]).collect();
    let trace = a.sample_batch(&picks, rng);
    Ok(Dataset::new(
        picks
            .iter()
            .zip(trace.messages)
            .map(|(&i, message)| DataPair {
                object: spec.object_at(i),
                message,
            })
            .collect(),
    ))
}

/// Shared, read-only inputs of a run.
pub struct RunContext<'a> {
    pub spec: &'a SpaceSpec,
    pub net: &'a NetConfig,
    pub train: &'a TrainConfig,
    pub nil: &'a NilConfig,
    pub split: &'a ValidationSplit,
}

/// The degenerate language used by the robustness variants: every object says all-zeros.
pub fn degenerate_dataset(spec: &SpaceSpec, objects: &[usize]) -> Result<Dataset> {
    let lang = generate_degenerate(spec, &Message(vec![0; spec.message_length]))?;
    Ok(Dataset::new(
        objects
            .iter()
            .map(|&i| DataPair {
                object: lang.objects()[i].clone(),
                message: lang.message(i).clone(),
            })
            .collect(),
    ))
}

pub struct GenerationOutput {
    pub record: GenerationRecord,
    pub points: Vec<PhasePoint>,
    pub greedy_language: Language,
    /// ρ of each Monte-Carlo language sample.
    pub rho_samples: Vec<f64>,
    pub next_dataset: Dataset,
}

/// One pass of the generational loop. On return `state` holds the trained agents;
/// its dataset is still the one this generation learned from.
pub fn run_generation<R: Rng + ?Sized>(
    state: &mut NilState,
    ctx: &RunContext<'_>,
    rng: &mut R,
) -> Result<GenerationOutput> {
    let started = Instant::now();
    let (spec, nil, train) = (ctx.spec, ctx.nil, ctx.train);
    let objects = &ctx.split.train;
    if state.dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    state.generation += 1;
    let generation = state.generation;

    let (a, b) = reset_agents(nil.reset_strategy, spec, ctx.net, rng);
    if let Some(a) = a {
        state.speaker = a;
    }
    if let Some(b) = b {
        state.listener = b;
    }

    let degenerate = if nil.degenerate_init || nil.degenerate_mix_fraction.is_some() {
        Some(degenerate_dataset(spec, objects)?)
    } else {
        None
    };
    if nil.degenerate_init {
        let d = degenerate.as_ref().expect("built above");
        for _ in 0..nil.pretrain_speaker_rounds / 2 {
            pretrain_speaker_batch(&mut state.speaker, d, train, rng)?;
        }
    }
    let learn_from = match nil.degenerate_mix_fraction {
        Some(f) => mix_pairs(&state.dataset, degenerate.as_ref().expect("built above").pairs(), f, rng)?,
        None => state.dataset.clone(),
    };
    for _ in 0..nil.pretrain_speaker_rounds {
        pretrain_speaker_batch(&mut state.speaker, &learn_from, train, rng)?;
    }

    let mut points = Vec::new();
    let curve = pretrain_listener(
        &state.speaker,
        &mut state.listener,
        train,
        nil.pretrain_listener_batches,
        objects,
        rng,
    )?;
    let frozen_rho = if curve.is_empty() {
        0.0
    } else {
        crate::training::greedy_rho(&state.speaker, spec, objects, nil.correlation)?
    };
    let every = nil.eval_every.max(1);
    for (k, chunk) in curve.chunks(every).enumerate() {
        points.push(PhasePoint {
            generation,
            phase: Phase::ListenerPretrain,
            point: EvalPoint {
                iteration: (k * every + chunk.len()),
                accuracy: chunk.iter().sum::<f64>() / chunk.len() as f64,
                rho_greedy: frozen_rho,
            },
        });
    }

    let trace = interact(
        &mut state.speaker,
        &mut state.listener,
        train,
        nil.interact_rounds,
        objects,
        every,
        nil.correlation,
        rng,
    )?;
    points.extend(trace.into_iter().map(|point| PhasePoint {
        generation,
        phase: Phase::Interact,
        point,
    }));

    let end_accuracy = evaluate_accuracy(
        &state.speaker,
        &state.listener,
        objects,
        objects,
        train.candidates,
        nil.eval_trials,
        rng,
    )?;
    let valid_accuracy = if ctx.split.valid.is_empty() {
        None
    } else {
        let all: Vec<usize> = (0..spec.object_count()).collect();
        Some(evaluate_accuracy(
            &state.speaker,
            &state.listener,
            &ctx.split.valid,
            &all,
            train.candidates,
            nil.eval_trials,
            rng,
        )?)
    };
    let greedy_language = state.speaker.greedy_language();
    let rho_greedy = topological_similarity(spec, &greedy_language, nil.correlation)?;
    let rho_samples = sample_rhos(&state.speaker, spec, nil.mc_samples, rng, nil.correlation)?;
    let (rho_expected_mc, rho_expected_se) = mean_and_se(&rho_samples);
    let next_dataset = transmit(&state.speaker, objects, nil.transmit_pairs, rng)?;
    let dataset_rho = dataset_rho(spec, &next_dataset, nil.correlation)?;

    Ok(GenerationOutput {
        record: GenerationRecord {
            generation,
            end_accuracy,
            valid_accuracy,
            rho_greedy,
            rho_expected_mc,
            rho_expected_se,
            message_type_count: message_type_count(&greedy_language),
            dataset_rho,
            wall_time: started.elapsed().as_secs_f64(),
        },
        points,
        greedy_language,
        rho_samples,
        next_dataset,
    })
}

fn dataset_rho(spec: &SpaceSpec, d: &Dataset, kind: CorrelationKind) -> Result<f64> {
    if d.len() < 3 {
        return Ok(0.0);
    }
    topsim_of_dataset(spec, d, kind)
}

pub struct NilOutcome {
    pub records: Vec<GenerationRecord>,
    pub points: Vec<PhasePoint>,
    pub final_language: Language,
    pub split: ValidationSplit,
    pub speaker: SpeakerAgent,
    pub listener: ListenerAgent,
}

/// Runs every generation from a uniform-random first dataset. `observe` sees
/// each generation's artifacts as soon as they exist.
pub fn run_nil(
    spec: &SpaceSpec,
    net: &NetConfig,
    train: &TrainConfig,
    nil: &NilConfig,
    mut observe: impl FnMut(&GenerationArtifacts<'_>) -> Result<()>,
) -> Result<NilOutcome> {
    spec.validate()?;
    net.validate()?;
    train.validate()?;
    nil.validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(nil.seed);
    let split = make_validation_split(spec, nil.valid_size, &mut rng)?;
    let first = random_dataset(spec, nil.transmit_pairs, &mut rng);
    let first = restrict(spec, first, &split, &mut rng);
    let mut state = NilState {
        speaker: SpeakerAgent::new(spec, net, &mut rng),
        listener: ListenerAgent::new(spec, net, &mut rng),
        dataset: first,
        generation: 0,
    };
    let ctx = RunContext {
        spec,
        net,
        train,
        nil,
        split: &split,
    };
    let mut records = Vec::with_capacity(nil.generations);
    let mut points = Vec::new();
    let mut final_language = state.speaker.greedy_language();
    for _ in 0..nil.generations {
        let out = run_generation(&mut state, &ctx, &mut rng)?;
        observe(&GenerationArtifacts {
            record: &out.record,
            points: &out.points,
            speaker: &state.speaker,
            listener: &state.listener,
            greedy_language: &out.greedy_language,
            rho_samples: &out.rho_samples,
            dataset: &state.dataset,
            next_dataset: &out.next_dataset,
        })?;
        state.dataset = out.next_dataset;
        records.push(out.record);
        points.extend(out.points);
        final_language = out.greedy_language;
    }
    Ok(NilOutcome {
        records,
        points,
        final_language,
        split,
        speaker: state.speaker,
        listener: state.listener,
    })
}

/// Redraws the objects of pairs that fall on held-out objects.
fn restrict<R: Rng + ?Sized>(spec: &SpaceSpec, d: Dataset, split: &ValidationSplit, rng: &mut R) -> Dataset {
    if split.valid.is_empty() {
        return d;
    }
    Dataset::new(
        d.pairs()
            .iter()
            .map(|p| {
                let i = spec.object_index(&p.object);
                let object = if split.valid.binary_search(&i).is_ok() {
                    spec.object_at(split.train[rng.gen_range(0..split.train.len())])
                } else {
                    p.object.clone()
                };
                DataPair {
                    object,
                    message: p.message.clone(),
                }
            })
            .collect(),
    )
}

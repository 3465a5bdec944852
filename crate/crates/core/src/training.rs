//! Update procedures: speaker cross-entropy pretraining, listener REINFORCE
//! pretraining against a frozen speaker, and the joint interacting phase.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::loss::{listener_loss, speaker_loss, ListenerLoss, SpeakerLoss};
use crate::agents::nn::argmax;
use crate::agents::speaker::Decode;
use crate::agents::{ListenerAgent, ListenerTrace, OptimizerKind, SpeakerAgent, SpeakerTrace};
use crate::language::{Dataset, Language};
use crate::objectspace::{sample_candidate_indices, Message, ObjectId, SpaceSpec};
use crate::topsim::{topological_similarity_on, CorrelationKind};
use crate::{Error, Result};

type NoRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Step size of the REINFORCE phases.
    pub lr: f64,
    /// Step size of speaker cross-entropy pretraining.
    pub pretrain_lr: f64,
    pub lambda_speaker: f64,
    pub lambda_listener: f64,
    /// Decay both entropy weights linearly to zero over each phase.
    pub anneal_entropy: bool,
    pub batch_size: usize,
    pub candidates: usize,
    pub use_baseline: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            pretrain_lr: 1e-3,
            lambda_speaker: 0.05,
            lambda_listener: 0.05,
            anneal_entropy: true,
            batch_size: 64,
            candidates: 5,
            use_baseline: true,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr", self.lr), ("pretrain_lr", self.pretrain_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lambda_speaker >= 0.0 && self.lambda_listener >= 0.0) {
            return Err(Error::Config("entropy weights must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.candidates < 2 {
            return Err(Error::Config("candidates must be at least 2".into()));
        }
        Ok(())
    }

    /// Entropy weights at iteration `k` of an `n`-iteration phase.
    pub fn entropy_weights(&self, k: usize, n: usize) -> (f64, f64) {
        let f = if self.anneal_entropy && n > 0 {
            1.0 - k as f64 / n as f64
        } else {
            1.0
        };
        (self.lambda_speaker * f, self.lambda_listener * f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub target: ObjectId,
    pub message: Message,
    pub candidates: Vec<ObjectId>,
    pub target_index: usize,
    pub choice: usize,
    pub reward: f64,
    pub speaker_log_prob: f64,
    pub speaker_entropy: f64,
    pub listener_log_prob: f64,
    pub listener_entropy: f64,
}

/// A batch of played rounds together with the traces needed for updates.
#[derive(Debug, Clone)]
pub struct PlayedBatch {
    pub speaker: SpeakerTrace,
    pub listener: ListenerTrace,
    pub target_index: Vec<usize>,
    pub choices: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl PlayedBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len() as f64
    }

    pub fn outcome(&self, spec: &SpaceSpec, b: usize) -> RoundOutcome {
        let choice = self.choices[b];
        RoundOutcome {
            target: spec.object_at(self.speaker.objects[b]),
            message: self.speaker.messages[b].clone(),
            candidates: self.listener.candidates[b].iter().map(|&i| spec.object_at(i)).collect(),
            target_index: self.target_index[b],
            choice,
            reward: self.rewards[b],
            speaker_log_prob: self.speaker.total_log_prob(b),
            speaker_entropy: self.speaker.total_entropy(b),
            listener_log_prob: self.listener.log_probs[[b, choice]],
            listener_entropy: self.listener.entropies[b],
        }
    }

    pub fn outcomes(&self, spec: &SpaceSpec) -> Vec<RoundOutcome> {
        (0..self.len()).map(|b| self.outcome(spec, b)).collect()
    }
}

/// How each side picks during a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Sample,
    Greedy,
}

/// Plays `batch` rounds. Targets are uniform over `targets`; distractors come
/// from `distractors` minus the target.
#[allow(clippy::too_many_arguments)]
pub fn play_batch<R: Rng + ?Sized>(
    a: &SpeakerAgent,
    b: &ListenerAgent,
    targets: &[usize],
    distractors: &[usize],
    c: usize,
    batch: usize,
    speaker_policy: Policy,
    listener_policy: Policy,
    rng: &mut R,
) -> Result<PlayedBatch> {
    if targets.is_empty() {
        return Err(Error::InsufficientObjects { needed: 1, available: 0 });
    }
    let objects: Vec<usize> = (0..batch).map(|_| targets[rng.gen_range(0..targets.len())]).collect();
    let mut candidates = Vec::with_capacity(batch);
    let mut target_index = Vec::with_capacity(batch);
    for &t in &objects {
        let (cands, pos) = sample_candidate_indices(distractors, t, c, rng)?;
        candidates.push(cands);
        target_index.push(pos);
    }
    let speaker = match speaker_policy {
        Policy::Sample => a.forward_batch(&objects, Decode::Sample(rng)),
        Policy::Greedy => a.forward_batch::<NoRng>(&objects, Decode::Greedy),
    };
    let listener = b.forward_batch(&speaker.messages, &candidates);
    let choices: Vec<usize> = listener
        .log_probs
        .rows()
        .into_iter()
        .map(|r| {
            let r = r.as_slice().expect("contiguous");
            match listener_policy {
                Policy::Sample => crate::agents::nn::sample_categorical(r, rng),
                Policy::Greedy => argmax(r),
            }
        })
        .collect();
    let rewards = choices
        .iter()
        .zip(&target_index)
        .map(|(c, t)| if c == t { 1.0 } else { 0.0 })
        .collect();
    Ok(PlayedBatch {
        speaker,
        listener,
        target_index,
        choices,
        rewards,
    })
}

/// A single training round over the whole object space.
pub fn play_round<R: Rng + ?Sized>(
    a: &SpeakerAgent,
    b: &ListenerAgent,
    spec: &SpaceSpec,
    cfg: &TrainConfig,
    rng: &mut R,
    sample_listener: bool,
) -> Result<RoundOutcome> {
    let all: Vec<usize> = (0..spec.object_count()).collect();
    let policy = if sample_listener { Policy::Sample } else { Policy::Greedy };
    let played = play_batch(a, b, &all, &all, cfg.candidates, 1, Policy::Sample, policy, rng)?;
    Ok(played.outcome(spec, 0))
}

/// Gradient norms actually applied; `None` for frozen agents.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateNorms {
    pub speaker: Option<f64>,
    pub listener: Option<f64>,
}

pub fn advantages(rewards: &[f64], use_baseline: bool) -> Vec<f64> {
    let baseline = if use_baseline && !rewards.is_empty() {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    } else {
        0.0
    };
    rewards.iter().map(|r| r - baseline).collect()
}

/// One REINFORCE step for every unfrozen agent (`None` means frozen).
pub fn reinforce_update(
    a: Option<&mut SpeakerAgent>,
    b: Option<&mut ListenerAgent>,
    played: &PlayedBatch,
    cfg: &TrainConfig,
    lambda_speaker: f64,
    lambda_listener: f64,
) -> UpdateNorms {
    let adv = advantages(&played.rewards, cfg.use_baseline);
    let mut norms = UpdateNorms::default();
    if let Some(a) = a {
        let (_, d) = speaker_loss(
            &played.speaker,
            SpeakerLoss::Reinforce {
                advantages: &adv,
                entropy_weight: lambda_speaker,
            },
        );
        let g = a.backward(&played.speaker, &d);
        norms.speaker = Some(g.norm());
        a.apply_gradients(&g, cfg.optimizer, cfg.lr);
    }
    if let Some(b) = b {
        let (_, d) = listener_loss(
            &played.listener,
            ListenerLoss::Reinforce {
                choices: &played.choices,
                advantages: &adv,
                entropy_weight: lambda_listener,
            },
        );
        let g = b.backward(&played.listener, &d);
        norms.listener = Some(g.norm());
        b.apply_gradients(&g, cfg.optimizer, cfg.lr);
    }
    norms
}

/// One cross-entropy step on `batch_size` pairs drawn with replacement from `d`.
/// Returns the mean per-step loss before the update.
pub fn pretrain_speaker_batch<R: Rng + ?Sized>(
    a: &mut SpeakerAgent,
    d: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = *a.spec();
    let mut objects = Vec::with_capacity(cfg.batch_size);
    let mut messages = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let p = &d.pairs()[rng.gen_range(0..d.len())];
        objects.push(spec.object_index(&p.object));
        messages.push(p.message.clone());
    }
    let trace = a.forward_batch::<NoRng>(&objects, Decode::Teacher(&messages));
    let (loss, dl) = speaker_loss(&trace, SpeakerLoss::CrossEntropy);
    let g = a.backward(&trace, &dl);
    a.apply_gradients(&g, cfg.optimizer, cfg.pretrain_lr);
    Ok(loss)
}

/// Listener REINFORCE against a frozen speaker; returns the per-batch mean reward.
pub fn pretrain_listener<R: Rng + ?Sized>(
    a: &SpeakerAgent,
    b: &mut ListenerAgent,
    cfg: &TrainConfig,
    batches: usize,
    objects: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut curve = Vec::with_capacity(batches);
    for k in 0..batches {
        let played = play_batch(
            a,
            b,
            objects,
            objects,
            cfg.candidates,
            cfg.batch_size,
            Policy::Sample,
            Policy::Sample,
            rng,
        )?;
        let (_, lb) = cfg.entropy_weights(k, batches);
        reinforce_update(None, Some(b), &played, cfg, 0.0, lb);
        curve.push(played.mean_reward());
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    /// Mean training reward since the previous evaluation.
    pub accuracy: f64,
    pub rho_greedy: f64,
}

/// Joint REINFORCE on both agents. Every `eval_every` iterations, and after the
/// last one, records the recent mean reward and the greedy language's ρ over
/// `objects`.
#[allow(clippy::too_many_arguments)]
pub fn interact<R: Rng + ?Sized>(
    a: &mut SpeakerAgent,
    b: &mut ListenerAgent,
    cfg: &TrainConfig,
    rounds: usize,
    objects: &[usize],
    eval_every: usize,
    kind: CorrelationKind,
    rng: &mut R,
) -> Result<Vec<EvalPoint>> {
    let spec = *a.spec();
    let eval_every = eval_every.max(1);
    let mut points = Vec::new();
    let mut acc_sum = 0.0;
    let mut acc_n = 0usize;
    for k in 0..rounds {
        let played = play_batch(
            a,
            b,
            objects,
            objects,
            cfg.candidates,
            cfg.batch_size,
            Policy::Sample,
            Policy::Sample,
            rng,
        )?;
        let (la, lb) = cfg.entropy_weights(k, rounds);
        reinforce_update(Some(a), Some(b), &played, cfg, la, lb);
        acc_sum += played.mean_reward();
        acc_n += 1;
        if (k + 1) % eval_every == 0 || k + 1 == rounds {
            points.push(EvalPoint {
                iteration: k + 1,
                accuracy: acc_sum / acc_n as f64,
                rho_greedy: greedy_rho(a, &spec, objects, kind)?,
            });
            acc_sum = 0.0;
            acc_n = 0;
        }
    }
    Ok(points)
}

/// ρ of the speaker's greedy language restricted to `objects`.
pub fn greedy_rho(a: &SpeakerAgent, spec: &SpaceSpec, objects: &[usize], kind: CorrelationKind) -> Result<f64> {
    topological_similarity_on(spec, &a.greedy_language(), objects, kind)
}

/// Greedy speaker, argmax listener, no updates.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_accuracy<R: Rng + ?Sized>(
    a: &SpeakerAgent,
    b: &ListenerAgent,
    targets: &[usize],
    distractor_pool: &[usize],
    c: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InsufficientObjects { needed: 1, available: 0 });
    }
    const CHUNK: usize = 256;
    let mut correct = 0.0;
    let mut done = 0;
    while done < trials {
        let n = CHUNK.min(trials - done);
        let played = play_batch(a, b, targets, distractor_pool, c, n, Policy::Greedy, Policy::Greedy, rng)?;
        correct += played.rewards.iter().sum::<f64>();
        done += n;
    }
    Ok(if trials == 0 { 0.0 } else { correct / trials as f64 })
}

/// Fraction of `objects` whose greedy message equals the language's message.
pub fn sequence_accuracy(a: &SpeakerAgent, lang: &Language, objects: &[usize]) -> f64 {
    if objects.is_empty() {
        return 0.0;
    }
    let greedy = a.greedy_batch(objects);
    let hits = objects
        .iter()
        .zip(&greedy)
        .filter(|(&i, m)| lang.message(i) == *m)
        .count();
    hits as f64 / objects.len() as f64
}

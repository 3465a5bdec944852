use ndarray::Axis;
use rand::Rng;

use super::nn::{
    self, active_rows, encode_objects, encode_objects_backward, log_softmax_rows, lstm_step,
    lstm_step_backward, row_entropies, scatter_token_grads, token_projection_backward, Grads,
    LstmCache, Matrix, Params, TokenProjection,
};
use super::optim::Optimizer;
use super::NetConfig;
use crate::language::Language;
use crate::objectspace::{Message, ObjectId, SpaceSpec};

/// Placeholder rng type for decoding modes that never sample.
type NoRng = rand_chacha::ChaCha8Rng;

pub(crate) const OBJ_W: usize = 0;
pub(crate) const OBJ_B: usize = 1;
pub(crate) const EMBED: usize = 2;
pub(crate) const LSTM_WX: usize = 3;
pub(crate) const LSTM_WH: usize = 4;
pub(crate) const LSTM_B: usize = 5;
pub(crate) const OUT_W: usize = 6;
pub(crate) const OUT_B: usize = 7;

pub const SPEAKER_PARAM_NAMES: &[&str] = &[
    "object_mlp.weight",
    "object_mlp.bias",
    "symbol_embeddings",
    "lstm.weight_input",
    "lstm.weight_hidden",
    "lstm.bias",
    "output_head.weight",
    "output_head.bias",
];

/// Speaker: object MLP → initial LSTM state, one symbol per step through a
/// softmax head. The first step reads a dedicated start-token embedding
/// (row `vocab_size` of the embedding table).
#[derive(Debug, Clone)]
pub struct SpeakerAgent {
    spec: SpaceSpec,
    cfg: NetConfig,
    pub(crate) params: Params,
    pub(crate) optimizer: Option<Optimizer>,
}

/// How symbols are chosen at each step.
pub enum Decode<'a, R: Rng + ?Sized> {
    /// Read the given messages (one per batch row).
    Teacher(&'a [Message]),
    Sample(&'a mut R),
    Greedy,
}

/// Forward record of a batch of messages.
#[derive(Debug, Clone)]
pub struct SpeakerTrace {
    pub objects: Vec<usize>,
    /// Emitted or teacher-forced symbols, one vector per batch row.
    pub messages: Vec<Message>,
    /// Per-step log-probabilities over the vocabulary, `B x V`.
    pub step_log_probs: Vec<Matrix>,
    /// Per-step entropies, one value per batch row.
    pub step_entropies: Vec<Vec<f64>>,
    active: Vec<Vec<usize>>,
    h0: Matrix,
    steps: Vec<(Vec<usize>, LstmCache, Matrix)>,
    proj: TokenProjection,
}

impl SpeakerTrace {
    pub fn batch_size(&self) -> usize {
        self.objects.len()
    }

    pub fn steps(&self) -> usize {
        self.step_log_probs.len()
    }

    /// `log P(m_l | x, m_<l)` of the realized symbol.
    pub fn symbol_log_prob(&self, b: usize, step: usize) -> f64 {
        self.step_log_probs[step][[b, self.messages[b].0[step]]]
    }

    pub fn total_log_prob(&self, b: usize) -> f64 {
        (0..self.steps()).map(|t| self.symbol_log_prob(b, t)).sum()
    }

    /// Sum of per-step conditional entropies along the realized prefix.
    pub fn total_entropy(&self, b: usize) -> f64 {
        self.step_entropies.iter().map(|e| e[b]).sum()
    }

    /// Step distribution for row `b` as probabilities.
    pub fn step_probs(&self, b: usize, step: usize) -> Vec<f64> {
        self.step_log_probs[step].row(b).iter().map(|v| v.exp()).collect()
    }
}

impl SpeakerAgent {
    pub fn new<R: Rng + ?Sized>(spec: &SpaceSpec, cfg: &NetConfig, rng: &mut R) -> Self {
        let h = cfg.hidden_size;
        let shapes = Self::shapes(spec, h);
        SpeakerAgent {
            spec: *spec,
            cfg: cfg.clone(),
            params: Params::init(
                SPEAKER_PARAM_NAMES,
                &shapes,
                &[OBJ_B, LSTM_B, OUT_B],
                cfg.init_scale,
                rng,
            ),
            optimizer: None,
        }
    }

    pub(crate) fn shapes(spec: &SpaceSpec, h: usize) -> Vec<(usize, usize)> {
        let v = spec.vocab_size;
        vec![
            (spec.encoding_len(), h),
            (1, h),
            (v + 1, h),
            (h, 4 * h),
            (h, 4 * h),
            (1, 4 * h),
            (h, v),
            (1, v),
        ]
    }

    pub(crate) fn from_params(spec: SpaceSpec, cfg: NetConfig, params: Params) -> Self {
        SpeakerAgent {
            spec,
            cfg,
            params,
            optimizer: None,
        }
    }

    /// Closed-form parameter count of the architecture.
    pub fn expected_param_count(spec: &SpaceSpec, hidden: usize) -> usize {
        let (d, v, h) = (spec.encoding_len(), spec.vocab_size, hidden);
        (d * h + h) + (v + 1) * h + (2 * h * 4 * h + 4 * h) + (h * v + v)
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn start_token(&self) -> usize {
        self.spec.vocab_size
    }

    fn active(&self, objects: &[usize]) -> Vec<Vec<usize>> {
        objects
            .iter()
            .map(|&i| active_rows(self.spec.n_values, &self.spec.object_at(i).0))
            .collect()
    }

    /// Batched forward pass over canonical object indices.
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        objects: &[usize],
        mut decode: Decode<'_, R>,
    ) -> SpeakerTrace {
        let p = &self.params;
        let batch = objects.len();
        let active = self.active(objects);
        let h0 = encode_objects(&active, p.get(OBJ_W), p.get(OBJ_B));
        let proj = TokenProjection::new(p.get(EMBED), p.get(LSTM_WX));
        let mut h = h0.clone();
        let mut c = Matrix::zeros(h0.raw_dim());
        let mut tokens = vec![self.start_token(); batch];
        let mut messages: Vec<Vec<usize>> = vec![Vec::with_capacity(self.spec.message_length); batch];
        let mut step_log_probs = Vec::with_capacity(self.spec.message_length);
        let mut step_entropies = Vec::with_capacity(self.spec.message_length);
        let mut steps = Vec::with_capacity(self.spec.message_length);

        for t in 0..self.spec.message_length {
            let out = lstm_step(proj.gather(&tokens), &h, &c, false, p.get(LSTM_WH), p.get(LSTM_B));
            let mut logits = out.h.dot(p.get(OUT_W));
            logits += p.get(OUT_B);
            let lp = log_softmax_rows(&logits);
            let ent = row_entropies(&lp);
            let next: Vec<usize> = match &mut decode {
                Decode::Teacher(msgs) => msgs.iter().map(|m| m.0[t]).collect(),
                Decode::Sample(rng) => lp
                    .rows()
                    .into_iter()
                    .map(|r| nn::sample_categorical(r.as_slice().expect("contiguous"), *rng))
                    .collect(),
                Decode::Greedy => lp
                    .rows()
                    .into_iter()
                    .map(|r| nn::argmax(r.as_slice().expect("contiguous")))
                    .collect(),
            };
            for (m, &s) in messages.iter_mut().zip(&next) {
                m.push(s);
            }
            steps.push((tokens, out.cache, out.h.clone()));
            step_log_probs.push(lp);
            step_entropies.push(ent);
            h = out.h;
            c = out.c;
            tokens = next;
        }

        SpeakerTrace {
            objects: objects.to_vec(),
            messages: messages.into_iter().map(Message).collect(),
            step_log_probs,
            step_entropies,
            active,
            h0,
            steps,
            proj,
        }
    }

    /// Parameter gradients given `d loss / d logits` for every step.
    pub fn backward(&self, trace: &SpeakerTrace, dlogits: &[Matrix]) -> Grads {
        let p = &self.params;
        let mut g = p.zeros_like();
        let hidden = self.cfg.hidden_size;
        let batch = trace.batch_size();
        let mut dtable = Matrix::zeros(trace.proj.table.raw_dim());
        let mut dh = Matrix::zeros((batch, hidden));
        let mut dc = Matrix::zeros((batch, hidden));
        for t in (0..trace.steps()).rev() {
            let (tokens, cache, h_t) = &trace.steps[t];
            let dl = &dlogits[t];
            ndarray::linalg::general_mat_mul(1.0, &h_t.t(), dl, 1.0, &mut g.0[OUT_W]);
            g.0[OUT_B] += &dl.sum_axis(Axis(0)).insert_axis(Axis(0));
            ndarray::linalg::general_mat_mul(1.0, dl, &p.get(OUT_W).t(), 1.0, &mut dh);
            let (dx, dh_prev, dc_prev) = {
                let (dwh, rest) = g.0.split_at_mut(LSTM_B);
                lstm_step_backward(cache, &dh, &dc, p.get(LSTM_WH), &mut dwh[LSTM_WH], &mut rest[0])
            };
            scatter_token_grads(&mut dtable, tokens, &dx);
            dh = dh_prev;
            dc = dc_prev;
        }
        {
            let (left, right) = g.0.split_at_mut(LSTM_WX);
            token_projection_backward(&dtable, p.get(EMBED), p.get(LSTM_WX), &mut left[EMBED], &mut right[0]);
        }
        {
            let (w, b) = g.0.split_at_mut(OBJ_B);
            encode_objects_backward(&trace.active, &trace.h0, &dh, &mut w[OBJ_W], &mut b[0]);
        }
        g
    }

    /// Teacher-forced forward pass for one object.
    pub fn forward(&self, x: &ObjectId, teacher_message: Option<&Message>) -> SpeakerTrace {
        let idx = [self.spec.object_index(x)];
        match teacher_message {
            Some(m) => self.forward_batch::<NoRng>(&idx, Decode::Teacher(std::slice::from_ref(m))),
            None => self.forward_batch::<NoRng>(&idx, Decode::Greedy),
        }
    }

    /// Samples a message; returns it with its total log-probability and entropy.
    pub fn sample<R: Rng + ?Sized>(&self, x: &ObjectId, rng: &mut R) -> (Message, f64, f64, SpeakerTrace) {
        let trace = self.forward_batch(&[self.spec.object_index(x)], Decode::Sample(rng));
        let m = trace.messages[0].clone();
        (m, trace.total_log_prob(0), trace.total_entropy(0), trace)
    }

    pub fn greedy(&self, x: &ObjectId) -> Message {
        self.greedy_batch(&[self.spec.object_index(x)]).remove(0)
    }

    pub fn greedy_batch(&self, objects: &[usize]) -> Vec<Message> {
        self.forward_batch::<NoRng>(objects, Decode::Greedy).messages
    }

    /// Per-step argmax message for every object.
    pub fn greedy_language(&self) -> Language {
        let all: Vec<usize> = (0..self.spec.object_count()).collect();
        Language::from_messages(&self.spec, self.greedy_batch(&all)).expect("valid messages")
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, objects: &[usize], rng: &mut R) -> SpeakerTrace {
        self.forward_batch(objects, Decode::Sample(rng))
    }

    /// `log P(m | x)` for each (object, message) pair.
    pub fn log_probs(&self, objects: &[usize], messages: &[Message]) -> Vec<f64> {
        let trace = self.forward_batch::<NoRng>(objects, Decode::Teacher(messages));
        (0..objects.len()).map(|b| trace.total_log_prob(b)).collect()
    }

    /// Log-probability of a whole language under conditionally independent messages.
    pub fn language_log_prob(&self, lang: &Language) -> f64 {
        let all: Vec<usize> = (0..lang.len()).collect();
        self.log_probs(&all, lang.messages()).iter().sum()
    }

    /// Draws one full language by sampling each object's message independently.
    pub fn sample_languages<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Language> {
        let n = self.spec.object_count();
        let objects: Vec<usize> = (0..count).flat_map(|_| 0..n).collect();
        let trace = self.sample_batch(&objects, rng);
        trace
            .messages
            .chunks(n)
            .map(|c| Language::from_messages(&self.spec, c.to_vec()).expect("valid"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language::{generate_compositional, random_language};
    use crate::topsim::{topological_similarity, CorrelationKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn default_spec() -> SpaceSpec {
        SpaceSpec::new(2, 8, 2, 8).unwrap()
    }

    fn small_cfg() -> NetConfig {
        NetConfig {
            hidden_size: 16,
            init_scale: 0.1,
        }
    }

    fn uniform(spec: &SpaceSpec, rng: &mut ChaCha8Rng) -> SpeakerAgent {
        let mut a = SpeakerAgent::new(spec, &small_cfg(), rng);
        a.params.tensors_mut()[OUT_W].fill(0.0);
        a
    }

    #[test]
    fn step_distributions_are_normalized() {
        let spec = default_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = SpeakerAgent::new(&spec, &NetConfig { hidden_size: 16, init_scale: 1.0 }, &mut rng);
        let objects: Vec<usize> = (0..64).collect();
        let trace = a.sample_batch(&objects, &mut rng);
        for lp in &trace.step_log_probs {
            for row in lp.rows() {
                assert!((row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| v <= 0.0));
            }
        }
        for e in trace.step_entropies.iter().flatten() {
            assert!(*e >= 0.0 && *e <= (8f64).ln() + 1e-12);
        }
    }

    #[test]
    fn sampled_log_prob_matches_teacher_forcing() {
        let spec = default_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = SpeakerAgent::new(&spec, &NetConfig { hidden_size: 16, init_scale: 0.8 }, &mut rng);
        for i in 0..20 {
            let x = spec.object_at(i);
            let (m, logp, h, trace) = a.sample(&x, &mut rng);
            let forced = a.forward(&x, Some(&m));
            assert_eq!(forced.total_log_prob(0), logp);
            let by_steps: f64 = (0..2).map(|t| forced.step_log_probs[t][[0, m.0[t]]]).sum();
            assert_eq!(by_steps, logp);
            assert_eq!(trace.total_entropy(0), h);
            assert_eq!(a.log_probs(&[i], std::slice::from_ref(&m))[0], logp);
        }
    }

    #[test]
    fn zeroed_head_is_uniform() {
        let spec = default_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = uniform(&spec, &mut rng);
        let trace = a.forward(&spec.object_at(5), Some(&Message(vec![3, 4])));
        for t in 0..2 {
            assert!(trace.step_probs(0, t).iter().all(|p| (p - 0.125).abs() < 1e-12));
            assert!((trace.step_entropies[t][0] - 8f64.ln()).abs() < 1e-12);
        }
        assert!(a.greedy_language().messages().iter().all(|m| m.0 == vec![0, 0]));
        let lang = random_language(&spec, &mut rng);
        let expected = 64.0 * 2.0 * (1.0f64 / 8.0).ln();
        assert!((a.language_log_prob(&lang) - expected).abs() < 1e-9);
    }

    #[test]
    fn language_distribution_is_normalized_on_tiny_spec() {
        let spec = SpaceSpec::new(1, 2, 1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = SpeakerAgent::new(&spec, &NetConfig { hidden_size: 5, init_scale: 1.0 }, &mut rng);
        let mut total = 0.0;
        for m0 in 0..2 {
            for m1 in 0..2 {
                let l = crate::language::Language::from_messages(&spec, vec![Message(vec![m0]), Message(vec![m1])]).unwrap();
                total += a.language_log_prob(&l).exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn uniform_speaker_samples_every_message_equally() {
        let spec = SpaceSpec::new(1, 2, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = uniform(&spec, &mut rng);
        let n = 8000;
        let trace = a.sample_batch(&vec![0; n], &mut rng);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for m in &trace.messages {
            *counts.entry(m.0.clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        let e = n as f64 / 4.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 3 dof, p = 0.001
        assert!(chi2 < 16.27, "{chi2}");
    }

    #[test]
    fn confident_speaker_samples_its_greedy_message() {
        let spec = default_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut a = SpeakerAgent::new(&spec, &small_cfg(), &mut rng);
        a.params.tensors_mut()[OUT_B][[0, 6]] = 40.0;
        let objects: Vec<usize> = (0..64).collect();
        let sampled = a.sample_batch(&objects, &mut rng).messages;
        assert_eq!(sampled, a.greedy_batch(&objects));
        assert!(sampled.iter().all(|m| m.0 == vec![6, 6]));
    }

    #[test]
    fn teacher_forced_language_becomes_certain_after_training() {
        use crate::agents::loss::{speaker_loss, SpeakerLoss};
        use crate::agents::OptimizerKind;
        let spec = SpaceSpec::new(2, 3, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lang = generate_compositional(&spec, &mut rng).unwrap();
        let mut a = SpeakerAgent::new(&spec, &small_cfg(), &mut rng);
        let objects: Vec<usize> = (0..spec.object_count()).collect();
        let before = a.language_log_prob(&lang);
        for _ in 0..400 {
            let trace = a.forward_batch::<NoRng>(&objects, Decode::Teacher(lang.messages()));
            let (_, d) = speaker_loss(&trace, SpeakerLoss::CrossEntropy);
            let g = a.backward(&trace, &d);
            a.apply_gradients(&g, OptimizerKind::Adam, 0.01);
        }
        let after = a.language_log_prob(&lang);
        assert!(after > before && after > -0.05 && after < 0.0, "{before} -> {after}");
        assert_eq!(a.greedy_language(), lang);
    }

    #[test]
    fn construction_is_deterministic_and_counts_match() {
        let spec = default_spec();
        let cfg = NetConfig::default();
        let a = SpeakerAgent::new(&spec, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = SpeakerAgent::new(&spec, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.params(), b.params());
        assert_eq!(a.params().count(), SpeakerAgent::expected_param_count(&spec, 128));
        // 16*128+128 + 9*128 + 2*128*512+512 + 128*8+8
        assert_eq!(a.params().count(), 2176 + 1152 + 131584 + 1032);
        assert!(a.params().tensors()[LSTM_B].iter().all(|&v| v == 0.0));
        assert!(a.params().tensors()[OBJ_W].iter().all(|&v| v.abs() <= 0.1));
        let objects: Vec<usize> = (0..64).collect();
        let s1 = a.sample_batch(&objects, &mut ChaCha8Rng::seed_from_u64(1)).messages;
        let s2 = b.sample_batch(&objects, &mut ChaCha8Rng::seed_from_u64(1)).messages;
        assert_eq!(s1, s2);
    }

    #[test]
    fn fresh_speakers_have_low_rho() {
        let spec = default_spec();
        let mean: f64 = (0..10)
            .map(|s| {
                let a = SpeakerAgent::new(&spec, &NetConfig::default(), &mut ChaCha8Rng::seed_from_u64(s));
                topological_similarity(&spec, &a.greedy_language(), CorrelationKind::Spearman).unwrap()
            })
            .sum::<f64>()
            / 10.0;
        assert!(mean < 0.4, "{mean}");
    }
}

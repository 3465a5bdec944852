use rand::Rng;

use super::nn::{
    active_rows, encode_objects, encode_objects_backward, log_softmax_rows, lstm_step,
    lstm_step_backward, row_entropies, scatter_token_grads, token_projection_backward, Grads,
    LstmCache, Matrix, Params, TokenProjection,
};
use super::optim::Optimizer;
use super::NetConfig;
use crate::objectspace::{Message, ObjectId, SpaceSpec};

pub(crate) const EMBED: usize = 0;
pub(crate) const LSTM_WX: usize = 1;
pub(crate) const LSTM_WH: usize = 2;
pub(crate) const LSTM_B: usize = 3;
pub(crate) const CAND_W: usize = 4;
pub(crate) const CAND_B: usize = 5;

pub const LISTENER_PARAM_NAMES: &[&str] = &[
    "symbol_embeddings",
    "lstm.weight_input",
    "lstm.weight_hidden",
    "lstm.bias",
    "candidate_mlp.weight",
    "candidate_mlp.bias",
];

/// Listener: a decoding LSTM reads the message from a zero state; each
/// candidate is scored by the dot product of the final hidden state with the
/// candidate's MLP embedding.
#[derive(Debug, Clone)]
pub struct ListenerAgent {
    spec: SpaceSpec,
    cfg: NetConfig,
    pub(crate) params: Params,
    pub(crate) optimizer: Option<Optimizer>,
}

#[derive(Debug, Clone)]
pub struct ListenerTrace {
    pub messages: Vec<Message>,
    /// Candidate object indices, one row of `c` per batch element.
    pub candidates: Vec<Vec<usize>>,
    pub scores: Matrix,
    pub log_probs: Matrix,
    pub entropies: Vec<f64>,
    steps: Vec<(Vec<usize>, LstmCache)>,
    h_final: Matrix,
    cand_active: Vec<Vec<usize>>,
    cand_embed: Matrix,
    proj: TokenProjection,
}

impl ListenerTrace {
    pub fn batch_size(&self) -> usize {
        self.messages.len()
    }

    pub fn choice_distribution(&self, b: usize) -> Vec<f64> {
        self.log_probs.row(b).iter().map(|v| v.exp()).collect()
    }
}

impl ListenerAgent {
    pub fn new<R: Rng + ?Sized>(spec: &SpaceSpec, cfg: &NetConfig, rng: &mut R) -> Self {
        ListenerAgent {
            spec: *spec,
            cfg: cfg.clone(),
            params: Params::init(
                LISTENER_PARAM_NAMES,
                &Self::shapes(spec, cfg.hidden_size),
                &[LSTM_B, CAND_B],
                cfg.init_scale,
                rng,
            ),
            optimizer: None,
        }
    }

    pub(crate) fn shapes(spec: &SpaceSpec, h: usize) -> Vec<(usize, usize)> {
        vec![
            (spec.vocab_size, h),
            (h, 4 * h),
            (h, 4 * h),
            (1, 4 * h),
            (spec.encoding_len(), h),
            (1, h),
        ]
    }

    pub(crate) fn from_params(spec: SpaceSpec, cfg: NetConfig, params: Params) -> Self {
        ListenerAgent {
            spec,
            cfg,
            params,
            optimizer: None,
        }
    }

    pub fn expected_param_count(spec: &SpaceSpec, hidden: usize) -> usize {
        let (d, v, h) = (spec.encoding_len(), spec.vocab_size, hidden);
        v * h + (2 * h * 4 * h + 4 * h) + (d * h + h)
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

    /// Scores every candidate list against its message.
    pub fn forward_batch(&self, messages: &[Message], candidates: &[Vec<usize>]) -> ListenerTrace {
        assert_eq!(messages.len(), candidates.len());
        let p = &self.params;
        let batch = messages.len();
        let hidden = self.cfg.hidden_size;
        let n_cand = candidates.first().map_or(0, |c| c.len());
        assert!(candidates.iter().all(|c| c.len() == n_cand));

        let proj = TokenProjection::new(p.get(EMBED), p.get(LSTM_WX));
        let mut h = Matrix::zeros((batch, hidden));
        let mut c = Matrix::zeros((batch, hidden));
        let mut steps = Vec::with_capacity(self.spec.message_length);
        for t in 0..self.spec.message_length {
            let tokens: Vec<usize> = messages.iter().map(|m| m.0[t]).collect();
            let out = lstm_step(proj.gather(&tokens), &h, &c, t == 0, p.get(LSTM_WH), p.get(LSTM_B));
            steps.push((tokens, out.cache));
            h = out.h;
            c = out.c;
        }

        let cand_active: Vec<Vec<usize>> = candidates
            .iter()
            .flatten()
            .map(|&i| active_rows(self.spec.n_values, &self.spec.object_at(i).0))
            .collect();
        let cand_embed = encode_objects(&cand_active, p.get(CAND_W), p.get(CAND_B));
        let mut scores = Matrix::zeros((batch, n_cand));
        for b in 0..batch {
            let hb = h.row(b);
            for k in 0..n_cand {
                scores[[b, k]] = hb.dot(&cand_embed.row(b * n_cand + k));
            }
        }
        let log_probs = log_softmax_rows(&scores);
        let entropies = row_entropies(&log_probs);
        ListenerTrace {
            messages: messages.to_vec(),
            candidates: candidates.to_vec(),
            scores,
            log_probs,
            entropies,
            steps,
            h_final: h,
            cand_active,
            cand_embed,
            proj,
        }
    }

    /// Single-message convenience wrapper: `(scores, choice distribution)`.
    pub fn forward(&self, m: &Message, candidates: &[ObjectId]) -> (Vec<f64>, Vec<f64>) {
        let idx: Vec<usize> = candidates.iter().map(|o| self.spec.object_index(o)).collect();
        let trace = self.forward_batch(std::slice::from_ref(m), &[idx]);
        (trace.scores.row(0).to_vec(), trace.choice_distribution(0))
    }

    /// Parameter gradients given `d loss / d scores`.
    pub fn backward(&self, trace: &ListenerTrace, dscores: &Matrix) -> Grads {
        let p = &self.params;
        let mut g = p.zeros_like();
        let batch = trace.batch_size();
        let hidden = self.cfg.hidden_size;
        let n_cand = dscores.ncols();

        let mut dh = Matrix::zeros((batch, hidden));
        let mut dcand = Matrix::zeros(trace.cand_embed.raw_dim());
        for b in 0..batch {
            let hb = trace.h_final.row(b);
            for k in 0..n_cand {
                let ds = dscores[[b, k]];
                let row = b * n_cand + k;
                dh.row_mut(b).scaled_add(ds, &trace.cand_embed.row(row));
                dcand.row_mut(row).scaled_add(ds, &hb);
            }
        }
        {
            let (w, bias) = g.0.split_at_mut(CAND_B);
            encode_objects_backward(&trace.cand_active, &trace.cand_embed, &dcand, &mut w[CAND_W], &mut bias[0]);
        }

        let mut dtable = Matrix::zeros(trace.proj.table.raw_dim());
        let mut dc = Matrix::zeros((batch, hidden));
        for (tokens, cache) in trace.steps.iter().rev() {
            let (dx, dh_prev, dc_prev) = {
                let (left, right) = g.0.split_at_mut(LSTM_B);
                lstm_step_backward(cache, &dh, &dc, p.get(LSTM_WH), &mut left[LSTM_WH], &mut right[0])
            };
            scatter_token_grads(&mut dtable, tokens, &dx);
            dh = dh_prev;
            dc = dc_prev;
        }
        let (left, right) = g.0.split_at_mut(LSTM_WX);
        token_projection_backward(&dtable, p.get(EMBED), p.get(LSTM_WX), &mut left[EMBED], &mut right[0]);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(seed: u64) -> (SpaceSpec, ListenerAgent) {
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let cfg = NetConfig {
            hidden_size: 16,
            init_scale: 0.5,
        };
        let b = ListenerAgent::new(&spec, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        (spec, b)
    }

    #[test]
    fn duplicates_tie_and_distribution_sums_to_one() {
        let (spec, b) = agent(1);
        let cands = vec![spec.object_at(3), spec.object_at(10), spec.object_at(3)];
        let (scores, dist) = b.forward(&Message(vec![1, 7]), &cands);
        assert_eq!(scores[0], scores[2]);
        assert!(scores.iter().all(|s| s.is_finite()));
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permuting_candidates_permutes_scores() {
        let (spec, b) = agent(2);
        let cands: Vec<ObjectId> = [4, 9, 33, 60, 17].iter().map(|&i| spec.object_at(i)).collect();
        let perm = [3, 0, 4, 1, 2];
        let shuffled: Vec<ObjectId> = perm.iter().map(|&k| cands[k].clone()).collect();
        let m = Message(vec![5, 2]);
        let (s, _) = b.forward(&m, &cands);
        let (t, _) = b.forward(&m, &shuffled);
        for (j, &k) in perm.iter().enumerate() {
            assert_eq!(t[j], s[k]);
        }
    }

    #[test]
    fn batched_scores_match_single_calls() {
        let (spec, b) = agent(3);
        let msgs = vec![Message(vec![0, 1]), Message(vec![7, 7])];
        let cands = vec![vec![1, 2, 3], vec![63, 0, 8]];
        let trace = b.forward_batch(&msgs, &cands);
        for r in 0..2 {
            let ids: Vec<ObjectId> = cands[r].iter().map(|&i| spec.object_at(i)).collect();
            let (s, _) = b.forward(&msgs[r], &ids);
            for k in 0..3 {
                assert!((trace.scores[[r, k]] - s[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_with_closed_form_count() {
        let (spec, a) = agent(4);
        let (_, b) = agent(4);
        assert_eq!(a.params(), b.params());
        assert_eq!(a.params().count(), ListenerAgent::expected_param_count(&spec, 16));
        assert_eq!(a.params().count(), 8 * 16 + 2 * 16 * 64 + 64 + 16 * 16 + 16);
    }
}

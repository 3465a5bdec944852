//! Scalar training objectives and their gradients with respect to logits.
//!
//! Every objective is a loss to be minimized. The REINFORCE objectives are the
//! negated surrogates whose gradient is the policy-gradient estimate plus the
//! entropy bonus.

use super::listener::ListenerTrace;
use super::nn::{entropy_logit_grad, Matrix};
use super::speaker::SpeakerTrace;

#[derive(Debug, Clone, Copy)]
pub enum SpeakerLoss<'a> {
    /// Negative log-likelihood of the trace's messages, averaged over batch and steps.
    CrossEntropy,
    /// `-(1/B) sum_b [adv_b log p(m_b | x_b) + lambda H_b]`.
    Reinforce {
        advantages: &'a [f64],
        entropy_weight: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub enum ListenerLoss<'a> {
    /// Negative log-probability of the target candidate, averaged over the batch.
    CrossEntropy { targets: &'a [usize] },
    /// `-(1/B) sum_b [adv_b log p(choice_b) + lambda H_b]`.
    Reinforce {
        choices: &'a [usize],
        advantages: &'a [f64],
        entropy_weight: f64,
    },
}

/// Loss value and `d loss / d logits` for every decoding step.
pub fn speaker_loss(trace: &SpeakerTrace, loss: SpeakerLoss<'_>) -> (f64, Vec<Matrix>) {
    let batch = trace.batch_size();
    let steps = trace.steps();
    let mut value = 0.0;
    let mut dlogits = Vec::with_capacity(steps);
    match loss {
        SpeakerLoss::CrossEntropy => {
            let scale = 1.0 / (batch * steps) as f64;
            for t in 0..steps {
                let lp = &trace.step_log_probs[t];
                let mut d = lp.mapv(f64::exp);
                for b in 0..batch {
                    let sym = trace.messages[b].0[t];
                    value -= lp[[b, sym]];
                    d[[b, sym]] -= 1.0;
                }
                d *= scale;
                dlogits.push(d);
            }
            value *= scale;
        }
        SpeakerLoss::Reinforce {
            advantages,
            entropy_weight,
        } => {
            assert_eq!(advantages.len(), batch);
            let scale = 1.0 / batch as f64;
            for t in 0..steps {
                let lp = &trace.step_log_probs[t];
                let mut d = Matrix::zeros(lp.raw_dim());
                for b in 0..batch {
                    let sym = trace.messages[b].0[t];
                    let adv = advantages[b];
                    let h = trace.step_entropies[t][b];
                    value -= adv * lp[[b, sym]] + entropy_weight * h;
                    let row = lp.row(b);
                    let mut drow = d.row_mut(b);
                    if adv != 0.0 {
                        for (k, &l) in row.iter().enumerate() {
                            drow[k] = adv * l.exp();
                        }
                        drow[sym] -= adv;
                    }
                    if entropy_weight != 0.0 {
                        let dh = entropy_logit_grad(row.as_slice().expect("contiguous"), h);
                        for (k, g) in dh.into_iter().enumerate() {
                            drow[k] -= entropy_weight * g;
                        }
                    }
                }
                d *= scale;
                dlogits.push(d);
            }
            value *= scale;
        }
    }
    (value, dlogits)
}

/// Loss value and `d loss / d scores`.
pub fn listener_loss(trace: &ListenerTrace, loss: ListenerLoss<'_>) -> (f64, Matrix) {
    let batch = trace.batch_size();
    let scale = 1.0 / batch as f64;
    let lp = &trace.log_probs;
    let mut value = 0.0;
    let mut d = Matrix::zeros(lp.raw_dim());
    match loss {
        ListenerLoss::CrossEntropy { targets } => {
            assert_eq!(targets.len(), batch);
            d.assign(&lp.mapv(f64::exp));
            for (b, &k) in targets.iter().enumerate() {
                value -= lp[[b, k]];
                d[[b, k]] -= 1.0;
            }
        }
        ListenerLoss::Reinforce {
            choices,
            advantages,
            entropy_weight,
        } => {
            assert_eq!(choices.len(), batch);
            assert_eq!(advantages.len(), batch);
            for b in 0..batch {
                let (k, adv, h) = (choices[b], advantages[b], trace.entropies[b]);
                value -= adv * lp[[b, k]] + entropy_weight * h;
                let row = lp.row(b);
                let mut drow = d.row_mut(b);
                if adv != 0.0 {
                    for (j, &l) in row.iter().enumerate() {
                        drow[j] = adv * l.exp();
                    }
                    drow[k] -= adv;
                }
                if entropy_weight != 0.0 {
                    let dh = entropy_logit_grad(row.as_slice().expect("contiguous"), h);
                    for (j, g) in dh.into_iter().enumerate() {
                        drow[j] -= entropy_weight * g;
                    }
                }
            }
        }
    }
    d *= scale;
    (value * scale, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ListenerAgent, NetConfig, SpeakerAgent};
    use crate::objectspace::{Message, SpaceSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_advantage_without_entropy_gives_zero_gradient() {
        let spec = SpaceSpec::new(2, 3, 2, 4).unwrap();
        let cfg = NetConfig { hidden_size: 6, init_scale: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = SpeakerAgent::new(&spec, &cfg, &mut rng);
        let trace = a.sample_batch(&[0, 4, 8], &mut rng);
        let (_, d) = speaker_loss(&trace, SpeakerLoss::Reinforce { advantages: &[0.0; 3], entropy_weight: 0.0 });
        let g = a.backward(&trace, &d);
        assert!(g.0.iter().all(|t| t.iter().all(|&v| v == 0.0)));

        let b = ListenerAgent::new(&spec, &cfg, &mut rng);
        let lt = b.forward_batch(&[Message(vec![0, 1])], &[vec![0, 1, 2]]);
        let (_, d) = listener_loss(&lt, ListenerLoss::Reinforce { choices: &[1], advantages: &[0.0], entropy_weight: 0.0 });
        assert!(b.backward(&lt, &d).0.iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn uniform_cross_entropy_is_length_times_log_vocab() {
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = SpeakerAgent::new(&spec, &NetConfig::default(), &mut rng);
        a.params_mut().tensors_mut()[crate::agents::speaker::OUT_W].fill(0.0);
        let trace = a.forward(&spec.object_at(9), Some(&Message(vec![2, 5])));
        let (v, _) = speaker_loss(&trace, SpeakerLoss::CrossEntropy);
        // averaged per step, so the per-pair loss is N_L times this
        assert!((2.0 * v - 2.0 * 8f64.ln()).abs() < 1e-12);
    }
}

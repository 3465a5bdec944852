//! Central finite-difference verification of the analytic gradients.

use rand::seq::SliceRandom;
use rand::Rng;

use super::listener::ListenerAgent;
use super::loss::{listener_loss, speaker_loss, ListenerLoss, SpeakerLoss};
use super::nn::{Grads, Params};
use super::speaker::{Decode, SpeakerAgent};
use crate::objectspace::{Message, SpaceSpec};
use crate::{Error, Result};

pub const FD_STEP: f64 = 1e-4;
/// Magnitudes below this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    CrossEntropy,
    /// REINFORCE surrogate with random advantages in `[-1, 1]`.
    Reinforce { entropy_weight: f64 },
}

#[derive(Clone, Copy)]
pub enum CheckedAgent<'a> {
    Speaker(&'a SpeakerAgent),
    Listener(&'a ListenerAgent),
}

#[derive(Debug, Clone)]
pub struct GroupError {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub loss: f64,
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Builds a random batch for `agent`, then compares every parameter entry's
/// analytic gradient against a central difference with step [`FD_STEP`].
pub fn gradient_check<R: Rng + ?Sized>(
    agent: CheckedAgent<'_>,
    loss: LossSpec,
    batch: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    match agent {
        CheckedAgent::Speaker(a) => {
            let spec = *a.spec();
            let objects: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..spec.object_count())).collect();
            let messages: Vec<Message> = (0..batch).map(|_| random_message(&spec, rng)).collect();
            let advantages: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = |agent: &SpeakerAgent| {
                let trace = agent.forward_batch::<rand_chacha::ChaCha8Rng>(&objects, Decode::Teacher(&messages));
                let l = match loss {
                    LossSpec::CrossEntropy => SpeakerLoss::CrossEntropy,
                    LossSpec::Reinforce { entropy_weight } => SpeakerLoss::Reinforce {
                        advantages: &advantages,
                        entropy_weight,
                    },
                };
                let (value, dlogits) = speaker_loss(&trace, l);
                (value, trace, dlogits)
            };
            let (value, trace, dlogits) = eval(a);
            let grads = a.backward(&trace, &dlogits);
            let mut probe = a.clone();
            compare(value, a.params(), &grads, |p| {
                *probe.params_mut() = p.clone();
                eval(&probe).0
            })
        }
        CheckedAgent::Listener(b) => {
            let spec = *b.spec();
            let c = spec.object_count().min(5);
            let messages: Vec<Message> = (0..batch).map(|_| random_message(&spec, rng)).collect();
            let all: Vec<usize> = (0..spec.object_count()).collect();
            let candidates: Vec<Vec<usize>> = (0..batch)
                .map(|_| all.choose_multiple(rng, c).copied().collect())
                .collect();
            let picks: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..c)).collect();
            let advantages: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = |agent: &ListenerAgent| {
                let trace = agent.forward_batch(&messages, &candidates);
                let l = match loss {
                    LossSpec::CrossEntropy => ListenerLoss::CrossEntropy { targets: &picks },
                    LossSpec::Reinforce { entropy_weight } => ListenerLoss::Reinforce {
                        choices: &picks,
                        advantages: &advantages,
                        entropy_weight,
                    },
                };
                let (value, d) = listener_loss(&trace, l);
                (value, trace, d)
            };
            let (value, trace, d) = eval(b);
            let grads = b.backward(&trace, &d);
            let mut probe = b.clone();
            compare(value, b.params(), &grads, |p| {
                *probe.params_mut() = p.clone();
                eval(&probe).0
            })
        }
    }
}

fn random_message<R: Rng + ?Sized>(spec: &SpaceSpec, rng: &mut R) -> Message {
    Message((0..spec.message_length).map(|_| rng.gen_range(0..spec.vocab_size)).collect())
}

fn compare(
    loss: f64,
    params: &Params,
    grads: &Grads,
    mut eval: impl FnMut(&Params) -> f64,
) -> Result<GradCheckReport> {
    if !loss.is_finite() {
        return Err(Error::GradientCheck(format!("loss is not finite: {loss}")));
    }
    let mut work = params.clone();
    let mut groups = Vec::with_capacity(params.tensors().len());
    let mut entries = 0;
    for (k, name) in params.names().iter().enumerate() {
        let mut worst = 0.0f64;
        let mut max_abs = 0.0f64;
        for idx in ndarray::indices_of(params.get(k)) {
            let orig = params.get(k)[idx];
            work.tensors_mut()[k][idx] = orig + FD_STEP;
            let plus = eval(&work);
            work.tensors_mut()[k][idx] = orig - FD_STEP;
            let minus = eval(&work);
            work.tensors_mut()[k][idx] = orig;
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::GradientCheck(format!(
                    "non-finite loss while perturbing {name}{idx:?}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.0[k][idx];
            worst = worst.max(relative_error(analytic, numeric));
            max_abs = max_abs.max(analytic.abs());
            entries += 1;
        }
        groups.push(GroupError {
            name,
            max_rel_error: worst,
            max_abs_grad: max_abs,
        });
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        loss,
        groups,
        max_rel_error,
        entries_checked: entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (SpaceSpec, NetConfig) {
        (
            SpaceSpec::new(2, 3, 3, 4).unwrap(),
            NetConfig {
                hidden_size: 8,
                init_scale: 0.5,
            },
        )
    }

    #[test]
    fn all_losses_pass_for_both_agents() {
        let (spec, cfg) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = SpeakerAgent::new(&spec, &cfg, &mut rng);
        let b = ListenerAgent::new(&spec, &cfg, &mut rng);
        for loss in [LossSpec::CrossEntropy, LossSpec::Reinforce { entropy_weight: 0.3 }] {
            for agent in [CheckedAgent::Speaker(&a), CheckedAgent::Listener(&b)] {
                let r = gradient_check(agent, loss, 4, &mut rng).unwrap();
                assert!(r.passes(1e-4), "{loss:?}: {:?}", r.groups);
                assert!(r.groups.iter().all(|g| g.max_abs_grad > 0.0), "{:?}", r.groups);
            }
        }
    }

    #[test]
    fn non_finite_loss_aborts() {
        let (spec, cfg) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = SpeakerAgent::new(&spec, &cfg, &mut rng);
        a.params_mut().tensors_mut()[crate::agents::speaker::OUT_B][[0, 0]] = f64::NAN;
        let err = gradient_check(CheckedAgent::Speaker(&a), LossSpec::CrossEntropy, 2, &mut rng);
        assert!(matches!(err, Err(Error::GradientCheck(_))));
    }
}

//! Speaker and listener networks with hand-written batched backward passes.

pub mod checkpoint;
pub mod gradcheck;
pub mod listener;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod speaker;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_listener, load_speaker, save_listener, save_speaker, Checkpoint};
pub use gradcheck::{gradient_check, CheckedAgent, GradCheckReport, LossSpec};
pub use listener::{ListenerAgent, ListenerTrace};
pub use loss::{listener_loss, speaker_loss, ListenerLoss, SpeakerLoss};
pub use optim::{Optimizer, OptimizerKind};
pub use speaker::{Decode, SpeakerAgent, SpeakerTrace};

use crate::objectspace::SpaceSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden_size: usize,
    pub init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden_size: 128,
            init_scale: 0.1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

pub fn init_speaker<R: Rng + ?Sized>(spec: &SpaceSpec, cfg: &NetConfig, rng: &mut R) -> SpeakerAgent {
    SpeakerAgent::new(spec, cfg, rng)
}

pub fn init_listener<R: Rng + ?Sized>(spec: &SpaceSpec, cfg: &NetConfig, rng: &mut R) -> ListenerAgent {
    ListenerAgent::new(spec, cfg, rng)
}

/// Applies one optimizer step to an agent's parameters, creating the optimizer state on first use.
macro_rules! impl_apply {
    ($t:ty) => {
        impl $t {
            pub fn apply_gradients(&mut self, grads: &nn::Grads, kind: OptimizerKind, lr: f64) {
                if self.optimizer.as_ref().map(Optimizer::kind) != Some(kind) {
                    self.optimizer = Some(Optimizer::new(kind, &self.params));
                }
                let opt = self.optimizer.as_mut().expect("just created");
                opt.step(&mut self.params, grads, lr);
            }

            pub fn reset_optimizer(&mut self) {
                self.optimizer = None;
            }
        }
    };
}

impl_apply!(SpeakerAgent);
impl_apply!(ListenerAgent);

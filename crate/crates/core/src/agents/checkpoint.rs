//! Agent checkpoints: JSON documents of named, shaped parameter tensors.
//!
//! ```json
//! {"format":"nil-agent","version":1,"role":"speaker",
//!  "spec":{...},"net":{"hidden_size":128,"init_scale":0.1},
//!  "tensors":[{"name":"object_mlp.weight","shape":[16,128],"data":[...]}, ...]}
//! ```
//!
//! `data` is row-major. Floats round-trip exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::listener::{ListenerAgent, LISTENER_PARAM_NAMES};
use super::nn::{Matrix, Params};
use super::speaker::{SpeakerAgent, SPEAKER_PARAM_NAMES};
use super::NetConfig;
use crate::objectspace::SpaceSpec;
use crate::{Error, Result};

pub const FORMAT: &str = "nil-agent";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speaker,
    Listener,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub role: Role,
    pub spec: SpaceSpec,
    pub net: NetConfig,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    fn new(role: Role, spec: SpaceSpec, net: NetConfig, params: &Params) -> Self {
        let tensors = params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorRecord {
                name: (*name).to_string(),
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            role,
            spec,
            net,
            tensors,
        }
    }

    fn params(&self, role: Role, names: &'static [&'static str], shapes: &[(usize, usize)]) -> Result<Params> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.role != role {
            return Err(Error::Checkpoint(format!("expected a {role:?} checkpoint, found {:?}", self.role)));
        }
        self.spec.validate()?;
        self.net.validate()?;
        if self.tensors.len() != names.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for ((rec, &name), &(r, c)) in self.tensors.iter().zip(names).zip(shapes) {
            if rec.name != name {
                return Err(Error::Checkpoint(format!("expected tensor `{name}`, found `{}`", rec.name)));
            }
            if rec.shape != [r, c] || rec.data.len() != r * c {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?} with {} values, expected [{r}, {c}]",
                    rec.shape,
                    rec.data.len()
                )));
            }
            if rec.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor `{name}` contains non-finite values")));
            }
            tensors.push(Matrix::from_shape_vec((r, c), rec.data.clone()).expect("shape checked"));
        }
        Ok(Params::from_tensors(names, tensors))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

impl SpeakerAgent {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(Role::Speaker, *self.spec(), self.config().clone(), self.params())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let shapes = SpeakerAgent::shapes(&ck.spec, ck.net.hidden_size);
        let params = ck.params(Role::Speaker, SPEAKER_PARAM_NAMES, &shapes)?;
        Ok(SpeakerAgent::from_params(ck.spec, ck.net.clone(), params))
    }
}

impl ListenerAgent {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(Role::Listener, *self.spec(), self.config().clone(), self.params())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let shapes = ListenerAgent::shapes(&ck.spec, ck.net.hidden_size);
        let params = ck.params(Role::Listener, LISTENER_PARAM_NAMES, &shapes)?;
        Ok(ListenerAgent::from_params(ck.spec, ck.net.clone(), params))
    }
}

pub fn save_speaker(a: &SpeakerAgent, path: &Path) -> Result<()> {
    a.to_checkpoint().write(path)
}

pub fn load_speaker(path: &Path) -> Result<SpeakerAgent> {
    SpeakerAgent::from_checkpoint(&Checkpoint::read(path)?)
}

pub fn save_listener(b: &ListenerAgent, path: &Path) -> Result<()> {
    b.to_checkpoint().write(path)
}

pub fn load_listener(path: &Path) -> Result<ListenerAgent> {
    ListenerAgent::from_checkpoint(&Checkpoint::read(path)?)
}

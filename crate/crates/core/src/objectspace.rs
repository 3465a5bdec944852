//! The attribute-value meaning space, object encodings and candidate sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the meaning space and of the message space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub n_attributes: usize,
    pub n_values: usize,
    pub message_length: usize,
    pub vocab_size: usize,
}

impl SpaceSpec {
    pub fn new(
        n_attributes: usize,
        n_values: usize,
        message_length: usize,
        vocab_size: usize,
    ) -> Result<Self> {
        let spec = SpaceSpec {
            n_attributes,
            n_values,
            message_length,
            vocab_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_attributes < 1 {
            return Err(Error::InvalidSpec("n_attributes must be >= 1".into()));
        }
        if self.n_values < 2 {
            return Err(Error::InvalidSpec("n_values must be >= 2".into()));
        }
        if self.message_length < 1 {
            return Err(Error::InvalidSpec("message_length must be >= 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidSpec("vocab_size must be >= 2".into()));
        }
        if checked_pow(self.n_values, self.n_attributes).is_none() {
            return Err(Error::InvalidSpec("object space too large to enumerate".into()));
        }
        Ok(())
    }

    /// Number of objects, `n_values ^ n_attributes`.
    pub fn object_count(&self) -> usize {
        checked_pow(self.n_values, self.n_attributes).expect("validated spec")
    }

    /// Number of distinct messages, `vocab_size ^ message_length`, if it fits in a `usize`.
    pub fn message_count(&self) -> Option<usize> {
        checked_pow(self.vocab_size, self.message_length)
    }

    /// Length of the concatenated one-hot object encoding.
    pub fn encoding_len(&self) -> usize {
        self.n_attributes * self.n_values
    }

    /// Canonical (lexicographic) index of a valid object.
    pub fn object_index(&self, x: &ObjectId) -> usize {
        x.0.iter().fold(0, |acc, &v| acc * self.n_values + v)
    }

    /// Inverse of [`SpaceSpec::object_index`].
    pub fn object_at(&self, mut index: usize) -> ObjectId {
        let mut attrs = vec![0; self.n_attributes];
        for slot in attrs.iter_mut().rev() {
            *slot = index % self.n_values;
            index /= self.n_values;
        }
        ObjectId(attrs)
    }

    pub fn check_object(&self, x: &ObjectId) -> Result<()> {
        if x.0.len() != self.n_attributes {
            return Err(Error::InvalidObject {
                object: x.0.clone(),
                reason: format!("expected {} attributes", self.n_attributes),
            });
        }
        if let Some(v) = x.0.iter().find(|&&v| v >= self.n_values) {
            return Err(Error::InvalidObject {
                object: x.0.clone(),
                reason: format!("attribute value {v} out of range [0, {})", self.n_values),
            });
        }
        Ok(())
    }

    pub fn check_message(&self, m: &Message) -> Result<()> {
        if m.0.len() != self.message_length {
            return Err(Error::InvalidMessage {
                message: m.0.clone(),
                reason: format!("expected length {}", self.message_length),
            });
        }
        if let Some(s) = m.0.iter().find(|&&s| s >= self.vocab_size) {
            return Err(Error::InvalidMessage {
                message: m.0.clone(),
                reason: format!("symbol {s} out of range [0, {})", self.vocab_size),
            });
        }
        Ok(())
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// An object as its tuple of attribute values. Serialized as `[3,7]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub Vec<usize>);

impl ObjectId {
    pub fn attributes(&self) -> &[usize] {
        &self.0
    }
}

/// A fixed-length sequence of vocabulary indices. Serialized as `[0,5]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Message(pub Vec<usize>);

impl Message {
    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// All objects in lexicographic attribute order.
pub fn enumerate_objects(spec: &SpaceSpec) -> Vec<ObjectId> {
    (0..spec.object_count()).map(|i| spec.object_at(i)).collect()
}

/// Concatenation of one one-hot block per attribute.
pub fn encode_object(spec: &SpaceSpec, x: &ObjectId) -> Result<Vec<f64>> {
    spec.check_object(x)?;
    let mut v = vec![0.0; spec.encoding_len()];
    for (a, &value) in x.0.iter().enumerate() {
        v[a * spec.n_values + value] = 1.0;
    }
    Ok(v)
}

/// Number of attributes on which two objects agree.
pub fn shared_attributes(x_i: &ObjectId, x_j: &ObjectId) -> usize {
    x_i.0.iter().zip(&x_j.0).filter(|(a, b)| a == b).count()
}

/// Negative cosine similarity of the one-hot encodings.
///
/// Each encoding has exactly `n_attributes` ones, so the cosine reduces to
/// the fraction of shared attribute values.
pub fn object_distance(spec: &SpaceSpec, x_i: &ObjectId, x_j: &ObjectId) -> f64 {
    debug_assert!(spec.check_object(x_i).is_ok() && spec.check_object(x_j).is_ok());
    -(shared_attributes(x_i, x_j) as f64) / spec.n_attributes as f64
}

/// Draws `c` candidates: the target plus `c - 1` distinct distractors from the
/// whole space, shuffled. Returns the list and the target's position.
pub fn sample_candidates<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    target: &ObjectId,
    c: usize,
    rng: &mut R,
) -> Result<(Vec<ObjectId>, usize)> {
    spec.check_object(target)?;
    let pool: Vec<usize> = (0..spec.object_count()).collect();
    let (idx, pos) = sample_candidate_indices(&pool, spec.object_index(target), c, rng)?;
    Ok((idx.into_iter().map(|i| spec.object_at(i)).collect(), pos))
}

/// Index-level candidate sampler over an arbitrary pool of object indices.
///
/// Distractors are drawn uniformly without replacement from `pool` minus the
/// target; the target lands at a uniform position.
pub fn sample_candidate_indices<R: Rng + ?Sized>(
    pool: &[usize],
    target: usize,
    c: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, usize)> {
    if c < 2 {
        return Err(Error::Config(format!("need at least 2 candidates, got {c}")));
    }
    let others: Vec<usize> = pool.iter().copied().filter(|&o| o != target).collect();
    if others.len() < c - 1 {
        return Err(Error::InsufficientObjects {
            needed: c,
            available: others.len() + 1,
        });
    }
    let mut out: Vec<usize> = others.choose_multiple(rng, c - 1).copied().collect();
    out.shuffle(rng);
    let pos = rng.gen_range(0..c);
    out.insert(pos, target);
    Ok((out, pos))
}

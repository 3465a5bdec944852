//! Neural iterated learning for emergent compositional languages.
//!
//! A speaker and a listener play a referential game over an attribute-value
//! object space. Across generations the agents are reset and pre-trained on a
//! small sample of their predecessors' language, which favours languages that
//! are quick to learn and therefore highly compositional.

pub mod agents;
pub mod analysis;
pub mod error;
pub mod harness;
pub mod language;
pub mod nil;
pub mod objectspace;
pub mod topsim;
pub mod training;

pub use error::{Error, Result};

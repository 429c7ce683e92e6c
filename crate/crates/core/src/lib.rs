//! Representation-level audits of machine unlearning.
//!
//! Output metrics can say a model has forgotten while its hidden layers still
//! encode the forgotten data. This crate measures that residue with membership
//! probes and probe-free geometry, certifies an unlearned model against a
//! retrained reference, and includes a small vertical federated learning
//! sandbox that produces the three models an audit needs.

pub mod audit;
pub mod error;
pub mod forget;
pub mod geometry;
pub mod ingest;
pub mod linalg;
pub mod probe;
pub mod rng;
pub mod sandbox;
pub mod stats;

pub use error::{MirageError, Result};
pub use forget::{ForgetSpec, LabelVector};
pub use ingest::{EmbeddingSet, ModelTag};
pub use linalg::Matrix;
pub use rng::Rng;

//! Story point estimation from comparative judgments.
//!
//! Instead of asking developers for a story point per backlog item, ask which
//! of two items needs more effort and learn a per-item effort score from those
//! judgments. This crate holds the data model, the featurizers, pair sampling,
//! the linear scoring head with its comparative, regression and SVM trainers,
//! the evaluation metrics and the experiment harness.

pub mod dataset;
pub mod error;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod pairing;
pub mod reference;
pub mod rng;

pub mod synthetic;

pub use error::{Error, Result};

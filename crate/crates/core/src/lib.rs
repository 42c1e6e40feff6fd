//! Online spatiotemporal allocation with deadlines: instances, tree
//! embeddings, optimal transport, the pseudo-cost algorithms and their
//! baselines, adversarial generators and an experiment harness.

pub mod adversary;
pub mod algorithms;
pub mod baselines;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod transport;

pub use error::{Result, SoadError};

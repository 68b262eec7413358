//! Switching linear dynamical systems with recurrent explicit durations.
//!
//! The crate covers four members of the family (SLDS, rSLDS, EDSLDS and
//! REDSLDS), a blocked Gibbs sampler built on Pólya-gamma augmentation,
//! synthetic data generation, and segmentation metrics.

pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod discrete;
pub mod dist;
pub mod error;
pub mod gibbs;
pub mod kalman;
pub mod linalg;
pub mod metrics;
pub mod model;
mod serde_mat;
pub mod stick;

pub use error::{Error, Result};

/// Generator used throughout the crate. Its state is serializable, which
/// checkpoints rely on.
pub type SeedRng = rand_chacha::ChaCha8Rng;

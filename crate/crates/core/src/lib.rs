//! Heterogeneous adversarial neural domain adaptation.
//!
//! Source and target samples with different feature spaces are projected into
//! one latent space through a shared dictionary, their distributions are
//! matched with an adversarially learned MMD kernel, and a single hinge-loss
//! classifier is trained on labeled samples from both domains.
//!
//! Data matrices store one sample per column throughout.

pub mod error;
pub mod numerics;
pub mod kernel;
pub mod sdl;
pub mod classifier;
pub mod data;
pub mod eval;
pub mod experiment;
pub mod trainer;
pub mod cli;

pub use error::{ErrorKind, HandaError, Result};

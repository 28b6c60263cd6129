//! Multimodal fake-news detection with entity-description enhanced text
//! features, contrastive image/text alignment, cross-modal interaction and
//! adaptive gated fusion.
//!
//! All gradients are written by hand; see [`model::gradcheck_model`] for the
//! finite-difference check that guards them.

#[macro_use]
mod macros;

pub mod align;
pub mod encoders;
pub mod enrich;
pub mod error;
pub mod fuse;
pub mod interact;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
pub use model::{Ablation, ModelDims, ModelInput, ModelParams, Objective};
pub use parallel::Execution;

//! Collective entity linking with graph convolution over sliding windows of
//! adjacent mentions.
//!
//! The pipeline: candidate generation from a prior dictionary
//! ([`candidates`]), per-candidate feature rows and sub-graph adjacency
//! ([`features`]), an encoder / sub-graph convolution / decoder network
//! trained with cross-entropy ([`model`]), and scoring plus baselines
//! ([`eval`]). [`numerics`] holds the small dense kernel everything runs on.

pub mod candidates;
pub mod corpus;
mod error;
pub mod eval;
pub mod features;
pub mod fixtures;
pub mod kb;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};

//! Language-queried video actor segmentation.
//!
//! A clip and a text query go through two branches: a 2-D encoder over the
//! middle frame and a 3-D encoder over all frames, each paired with its own
//! GRU text encoder. Word features modulate the visual channels at chosen
//! stages, and a sentence-conditioned per-channel selection mixes the two
//! branches before a top-down decoder predicts the referred actor's mask on
//! the middle frame.

pub mod ablation;
pub mod cmam;
pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod flops;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod pnm;
pub mod text;
pub mod train;
pub mod visual;

pub use error::{ModelError, Result};

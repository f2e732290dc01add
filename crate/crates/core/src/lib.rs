//! Spatio-temporal artery-vein segmentation for 2D+t digital subtraction
//! angiography (DSA).
//!
//! The crate is organised around the data flow of a segmentation study:
//!
//! - [`data`]: the [`DsaSeries`]/[`AvMask`] model, on-disk containers,
//!   preprocessing, augmentation, MinIP and time-intensity curves.
//! - [`synth`]: a seeded phantom generator producing DSA series with known
//!   artery/vein ground truth.
//! - [`baseline`]: Frangi vesselness + K-means clustering of time-intensity
//!   curves, usable standalone or behind an external vessel mask.
//! - [`nn`]: a small reverse-mode autodiff engine (NCHW, f32) used by the
//!   networks.
//! - [`model`]: the CAVE network (shared-weight frame encoder, temporal
//!   aggregation at every scale, 2D decoder) and the plain U-Net.
//! - [`train`]: the combined cross-entropy + multi-class Dice loss, RMSprop,
//!   plateau scheduling, early stopping and the training loop.
//! - [`eval`]: Dice family and confusion metrics, the paired Wilcoxon
//!   signed-rank test, error maps and method comparison reports.
//! - [`cli`]: the subcommands behind the `cave` binary.

pub mod baseline;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

pub use data::{AvMask, DsaSeries, PreprocessConfig, Tic, View};
pub use error::{CaveError, Result};
pub use model::{CaveConfig, SegNet, TemporalModule};


//! Minimal reverse-mode automatic differentiation over dense `f32` tensors.
//!
//! A [`Graph`] records every operation of one forward pass; calling
//! [`Graph::backward`] walks the tape in reverse and returns the gradient of
//! every parameter touched. Parameters live in a [`ParamStore`] and are
//! referenced by [`ParamId`], so one store can be used by many graphs (one per
//! training step) and shared weights accumulate gradients naturally.
//!
//! Image tensors use NCHW layout. Only the operations needed by the
//! segmentation networks are provided.

mod graph;
mod kernels;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

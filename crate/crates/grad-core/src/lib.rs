//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A define-by-run tape: every forward pass appends operation records to a
//! [`Graph`], and [`Graph::backward`] replays them once in reverse insertion
//! order. All math is 64-bit and single-threaded per graph; parameters live
//! outside the graph as plain [`Tensor`] values and are bound in per pass.

pub mod check;
pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod losses;
pub mod optim;
pub mod params;
pub mod seeding;
pub mod tensor;

pub use check::{grad_check, grad_check_coords};
pub use error::{GradError, Result};
pub use graph::{Graph, Var};
pub use optim::{clip_grad_norm, OptimizerState};
pub use params::{BoundParams, ParamMap};
pub use tensor::Tensor;

//! Minimal numeric foundation for the sequence models: a dense matrix type,
//! the kernel operations with their hand-derived backward passes, named
//! parameter sets with a binary checkpoint format, the Adam update rule and
//! a finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod kernels;
mod matrix;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use kernels::{cross_entropy, positional_encoding, softmax};
pub use matrix::{dot, Matrix};
pub use params::{pair_mut, Grads, Param, ParamId, ParamSet};

//! Hybrid CNN engine: tensors with reverse-mode differentiation, the layer
//! primitives, declarative model graphs (custom CNN, residual branches and
//! their feature-intersection fusion), data pipeline, training and evaluation.

pub mod arch;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod labels;
pub mod ops;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tensor};

//! Deterministic CPU reference implementation of a convolution-augmented
//! Transformer speech encoder, with a small reverse-mode autodiff core.
//!
//! The crate is generic over the floating-point scalar through [`Scalar`];
//! `f64` is the reference precision and `f32` is available behind the same
//! API. Concrete aliases for the common types live at the crate root.

pub mod ctx;
pub mod error;
pub mod frontend;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod modules;
pub mod ops;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod verify;

pub use ctx::{ForwardCtx, Mode};
pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};

/// Reference-precision tensor.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Reference-precision autodiff tape.
pub type Tape64 = tape::Tape<f64>;
/// Single-precision autodiff tape.
pub type Tape32 = tape::Tape<f32>;

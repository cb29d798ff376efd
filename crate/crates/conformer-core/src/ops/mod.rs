//! Differentiable tensor operations.
//!
//! Every op takes the tape plus `Var` handles, pushes one or more nodes, and
//! returns the result handle. Backward closures accumulate into parent slots
//! via [`crate::tape::GradStore::accumulate`].

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
mod shape;

pub use conv::{conv1d, conv2d, expand_groups, pad_time, stride_time, ConvKind};
pub use elementwise::{activation, add, add_row, dropout, glu, mul, mul_row, scale, sigmoid_scalar, Act};
pub use linalg::{matmul, transpose};
pub use norm::{batch_norm, batch_stats, layer_norm, BatchNormState};
pub use reduce::{mean_time, softmax, sum_all, windowed_mean};
pub use shape::{concat_cols, rel_shift, reshape, slice_cols};

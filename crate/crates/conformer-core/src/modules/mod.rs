//! Encoder building blocks: feed-forward, attention, convolution,
//! squeeze-and-excitation, and the convolutional subsampling stem.

pub mod attention;
pub mod conv_module;
pub mod feed_forward;
pub mod se;
pub mod subsample;

pub use attention::{
    absolute_positions, attention_scores_relpos, mhsa, relative_positions, MhsaParams, RelParams,
};
pub use conv_module::{conv_module, same_padding, ConvModuleParams, DepthwiseKind};
pub use feed_forward::{feed_forward, FeedForwardParams};
pub use se::{se_bottleneck, squeeze_excite, SeParams, SePooling};
pub use subsample::{conv_subsample, subsample_out_dims, SubsampleParams};

//! Forward-pass context: train/infer switch plus the dropout stream.

use rand_chacha::ChaCha8Rng;

use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Mutable state threaded through a forward pass.
///
/// The RNG is consumed only by train-mode dropout; in infer mode no draws
/// are made, so infer passes are deterministic regardless of seed.
pub struct ForwardCtx {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn infer() -> Self {
        ForwardCtx {
            mode: Mode::Infer,
            rng: stream_rng(0, Stream::Dropout),
        }
    }

    pub fn train(seed: u64) -> Self {
        ForwardCtx {
            mode: Mode::Train,
            rng: stream_rng(seed, Stream::Dropout),
        }
    }

    pub fn with_mode(mode: Mode, seed: u64) -> Self {
        match mode {
            Mode::Train => Self::train(seed),
            Mode::Infer => Self::infer(),
        }
    }
}

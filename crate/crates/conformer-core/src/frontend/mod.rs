//! Audio frontend: WAV ingestion, log-mel features, and SpecAugment.

pub mod mel;
pub mod specaugment;
pub mod wav;

pub use mel::{
    hz_to_mel, log_mel, mel_centers, mel_filterbank, mel_to_hz, FeatureConfig, FeatureMatrix,
};
pub use specaugment::{apply_masks, draw_masks, spec_augment, MaskSpec, SpecAugmentConfig};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, AudioBuffer};

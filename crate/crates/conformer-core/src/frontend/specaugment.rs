//! SpecAugment masking: random frequency bands and time spans zeroed out.
//!
//! All draws come from the dedicated SpecAugment RNG stream: frequency
//! masks first, then time masks, each drawn width-then-start with inclusive
//! uniform bounds. Width-zero draws are legal and leave the features
//! untouched, so `F = 0` with `time_ratio = 0` is the identity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::mel::FeatureMatrix;

/// Masking policy. `freq_mask` is the maximum width (mel channels) of one
/// frequency mask; `time_ratio` bounds one time mask to
/// `floor(time_ratio * T)` frames.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecAugmentConfig {
    pub freq_mask: usize,
    pub num_freq_masks: usize,
    pub num_time_masks: usize,
    pub time_ratio: f64,
    pub seed: u64,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        SpecAugmentConfig {
            freq_mask: 27,
            num_freq_masks: 2,
            num_time_masks: 10,
            time_ratio: 0.05,
            seed: 0,
        }
    }
}

impl SpecAugmentConfig {
    pub fn validate(&self, n_mels: usize) -> Result<()> {
        if self.freq_mask >= n_mels {
            return Err(Error::Config(format!(
                "freq_mask ({}) must be smaller than n_mels ({n_mels})",
                self.freq_mask
            )));
        }
        if !(0.0..=1.0).contains(&self.time_ratio) {
            return Err(Error::Config(format!(
                "time_ratio ({}) must lie in [0, 1]",
                self.time_ratio
            )));
        }
        Ok(())
    }
}

/// One mask: a half-open span of mel channels or frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSpec {
    /// Zero mel channels `start..start + width` over every frame.
    Freq { start: usize, width: usize },
    /// Zero frames `start..start + width` over every channel.
    Time { start: usize, width: usize },
}

/// Draw all masks for a `[t, n_mels]` feature matrix from the seeded
/// SpecAugment stream.
pub fn draw_masks(t: usize, n_mels: usize, cfg: &SpecAugmentConfig) -> Result<Vec<MaskSpec>> {
    cfg.validate(n_mels)?;
    let mut rng = stream_rng(cfg.seed, Stream::SpecAugment);
    let mut masks = Vec::with_capacity(cfg.num_freq_masks + cfg.num_time_masks);
    for _ in 0..cfg.num_freq_masks {
        let width = rng.random_range(0..=cfg.freq_mask);
        let start = rng.random_range(0..=n_mels - width);
        masks.push(MaskSpec::Freq { start, width });
    }
    let max_time = (cfg.time_ratio * t as f64).floor() as usize;
    for _ in 0..cfg.num_time_masks {
        let width = rng.random_range(0..=max_time);
        let start = rng.random_range(0..=t - width);
        masks.push(MaskSpec::Time { start, width });
    }
    Ok(masks)
}

/// Zero the cells covered by `masks` in place.
pub fn apply_masks(features: &mut FeatureMatrix, masks: &[MaskSpec]) {
    let (t, n_mels) = (features.num_frames(), features.num_mels());
    let data = features.data.data_mut();
    for mask in masks {
        match *mask {
            MaskSpec::Freq { start, width } => {
                for row in 0..t {
                    for m in start..start + width {
                        data[row * n_mels + m] = 0.0;
                    }
                }
            }
            MaskSpec::Time { start, width } => {
                data[start * n_mels..(start + width) * n_mels].fill(0.0);
            }
        }
    }
}

/// Masked copy of `features` under `cfg`.
pub fn spec_augment(features: &FeatureMatrix, cfg: &SpecAugmentConfig) -> Result<FeatureMatrix> {
    let masks = draw_masks(features.num_frames(), features.num_mels(), cfg)?;
    let mut out = features.clone();
    apply_masks(&mut out, &masks);
    Ok(out)
}

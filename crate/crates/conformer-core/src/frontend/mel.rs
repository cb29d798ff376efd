//! Log-mel filterbank feature extraction.
//!
//! Frames are cut with a periodic Hann window, transformed with a real FFT
//! sized to the next power of two at or above the window length, reduced to
//! a power spectrum, and projected through an HTK-scale triangular mel
//! filterbank. Energies are floored before the natural log so every output
//! cell is finite.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::wav::AudioBuffer;

/// Feature extraction settings. Window and hop are in milliseconds; the
/// sample counts and FFT size derive from the audio's sample rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub window_ms: usize,
    pub hop_ms: usize,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_mels: 80,
            window_ms: 25,
            hop_ms: 10,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_ms == 0 || self.window_ms <= self.hop_ms {
            return Err(Error::Config(format!(
                "window ({} ms) must exceed hop ({} ms) and hop must be positive",
                self.window_ms, self.hop_ms
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        sample_rate as usize * self.window_ms / 1000
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        sample_rate as usize * self.hop_ms / 1000
    }

    /// Next power of two at or above the window length.
    pub fn fft_size(&self, sample_rate: u32) -> usize {
        self.window_samples(sample_rate).next_power_of_two()
    }
}

/// Log-mel features, `[frames, n_mels]`, with the frame rate they were
/// extracted at.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Tensor<f64>,
    pub hop_ms: usize,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.data.dim(0)
    }

    pub fn num_mels(&self) -> usize {
        self.data.dim(1)
    }

    /// Frames per second.
    pub fn frame_rate_hz(&self) -> f64 {
        1000.0 / self.hop_ms as f64
    }

    /// Convert to the requested scalar precision.
    pub fn cast<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_fn(self.data.shape(), |i| {
            S::from_f64(self.data.data()[i].as_f64())
        })
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of `n_mels` triangles spanning `fmin..fmax`.
pub fn mel_centers(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let lo = hz_to_mel(fmin);
    let hi = hz_to_mel(fmax);
    (1..=n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filterbank, `[n_mels, fft_size/2 + 1]`, unnormalized HTK
/// triangles from 0 Hz to the Nyquist frequency.
pub fn mel_filterbank(sample_rate: u32, fft_size: usize, n_mels: usize) -> Tensor<f64> {
    let fmin = 0.0;
    let fmax = sample_rate as f64 / 2.0;
    let lo = hz_to_mel(fmin);
    let hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bins = fft_size / 2 + 1;
    let hz_per_bin = sample_rate as f64 / fft_size as f64;
    Tensor::from_fn(&[n_mels, bins], |idx| {
        let (m, k) = (idx / bins, idx % bins);
        let f = k as f64 * hz_per_bin;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let rise = (f - left) / (center - left);
        let fall = (right - f) / (right - center);
        rise.min(fall).max(0.0)
    })
}

/// Periodic Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Extract `[T, n_mels]` log-mel features, `T = 1 + (N - window) / hop`.
pub fn log_mel(audio: &AudioBuffer, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let sr = audio.sample_rate;
    let window = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    if window == 0 || hop == 0 {
        return Err(Error::Config(format!(
            "window of {} ms at {sr} Hz has no samples",
            cfg.window_ms
        )));
    }
    let n = audio.samples.len();
    if n < window {
        return Err(Error::dimension(
            "log_mel",
            format!("audio of {n} samples is shorter than one {window}-sample window"),
        ));
    }
    let frames = 1 + (n - window) / hop;
    let fft_size = cfg.fft_size(sr);
    let bins = fft_size / 2 + 1;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let win = hann(window);
    let bank = mel_filterbank(sr, fft_size, cfg.n_mels);

    let mut out = Tensor::zeros(&[frames, cfg.n_mels]);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0f64; bins];
    for t in 0..frames {
        let start = t * hop;
        for i in 0..fft_size {
            let s = if i < window {
                audio.samples[start + i] * win[i]
            } else {
                0.0
            };
            buf[i] = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let row = &bank.data()[m * bins..(m + 1) * bins];
            let energy: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.data_mut()[t * cfg.n_mels + m] = energy.max(cfg.log_floor).ln();
        }
    }
    Ok(FeatureMatrix {
        data: out,
        hop_ms: cfg.hop_ms,
    })
}

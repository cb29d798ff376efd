//! Minimal RIFF/WAVE reader and writer for PCM16 mono audio.
//!
//! The reader walks the chunk list, takes format information from `fmt `
//! and samples from `data`, and rejects anything that is not 16-bit mono
//! PCM with an error naming the offending header field.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    /// Duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// PCM16 full-scale divisor: sample `16384` decodes to `0.5`.
const SCALE: f64 = 32768.0;

fn u16_at(bytes: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

struct Fmt {
    sample_rate: u32,
}

fn parse_fmt(chunk: &[u8]) -> Result<Fmt> {
    if chunk.len() < 16 {
        return Err(Error::format("fmt", "fmt chunk shorter than 16 bytes"));
    }
    let audio_format = u16_at(chunk, 0);
    if audio_format != 1 {
        return Err(Error::format(
            "audio_format",
            format!("expected PCM (1), got {audio_format}"),
        ));
    }
    let num_channels = u16_at(chunk, 2);
    if num_channels != 1 {
        return Err(Error::format(
            "num_channels",
            format!("expected mono (1), got {num_channels}"),
        ));
    }
    let sample_rate = u32_at(chunk, 4);
    if sample_rate == 0 {
        return Err(Error::format("sample_rate", "sample rate is zero"));
    }
    let bits_per_sample = u16_at(chunk, 14);
    if bits_per_sample != 16 {
        return Err(Error::format(
            "bits_per_sample",
            format!("expected 16, got {bits_per_sample}"),
        ));
    }
    Ok(Fmt { sample_rate })
}

/// Decode PCM16 mono WAV bytes.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(Error::format("riff_magic", "missing RIFF header"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::format("wave_magic", "RIFF form type is not WAVE"));
    }
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4) as usize;
        let body_start = off + 8;
        if body_start + size > bytes.len() {
            return Err(Error::format(
                "chunk_size",
                format!("chunk {:?} overruns the file", String::from_utf8_lossy(id)),
            ));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        off = body_start + size + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::format("fmt", "missing fmt chunk"))?;
    let data = data.ok_or_else(|| Error::format("data", "missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(Error::format("data", "PCM16 payload has odd byte length"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / SCALE)
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: fmt.sample_rate,
    })
}

/// Read a PCM16 mono WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    decode_wav(&fs::read(path)?)
}

/// Encode an [`AudioBuffer`] as PCM16 mono WAV bytes. Samples are clamped
/// to `[-1, 1]` and rounded to the nearest 16-bit level.
pub fn encode_wav(audio: &AudioBuffer) -> Vec<u8> {
    let n = audio.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        let q = (s.clamp(-1.0, 1.0) * SCALE).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Write a PCM16 mono WAV file.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    fs::write(path, encode_wav(audio))?;
    Ok(())
}

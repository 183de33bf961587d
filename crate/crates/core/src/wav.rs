//! 16-bit PCM mono WAV input and output.

use std::path::Path;

use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct WavClip {
    /// in [-1, 1)
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

fn unsupported(path: &Path, detail: impl Into<String>) -> Error {
    Error::UnsupportedAudio {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Reads a 16 kHz, 16-bit PCM mono file. Anything else is rejected.
pub fn read_wav(path: &Path) -> Result<WavClip> {
    let mut reader = hound::WavReader::open(path).map_err(|e| unsupported(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(path, format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(
            path,
            format!("{} bit {:?} samples, expected 16-bit PCM", spec.bits_per_sample, spec.sample_format),
        ));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(
            path,
            format!("sample rate {} Hz, expected {SAMPLE_RATE}", spec.sample_rate),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| unsupported(path, e.to_string()))?;
    Ok(WavClip {
        samples,
        sample_rate: spec.sample_rate,
        channels: spec.channels,
    })
}

/// Writes 16-bit PCM mono.
pub fn write_wav(path: &Path, samples: &[i16], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}

/// Nearest 16-bit code, saturating.
pub fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

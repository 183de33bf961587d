//! Framing, window generation and the windowed DFT power spectrum.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::features::FeatureConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hamming,
    Rectangular,
    Custom,
}

/// A sample-domain window (taper) of the same length as the frame it multiplies.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    coefficients: Vec<f64>,
    kind: WindowKind,
}

impl Window {
    pub fn custom(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidLength("window must not be empty".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("window coefficients must be finite".into()));
        }
        Ok(Self {
            coefficients,
            kind: WindowKind::Custom,
        })
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Hamming coefficient `0.54 - 0.46 cos(2 pi t / n)`.
#[inline]
pub fn hamming_coefficient(t: usize, n: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * t as f64 / n as f64).cos()
}

pub fn make_window(kind: WindowKind, n: usize) -> Result<Window> {
    if n < 2 {
        return Err(Error::InvalidLength(format!(
            "window length must be at least 2, got {n}"
        )));
    }
    let coefficients = match kind {
        WindowKind::Hamming => (0..n).map(|t| hamming_coefficient(t, n)).collect(),
        WindowKind::Rectangular => vec![1.0; n],
        WindowKind::Custom => {
            return Err(Error::Config(
                "custom windows are built with Window::custom".into(),
            ))
        }
    };
    Ok(Window { coefficients, kind })
}

/// A short frame of `N` real samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Frame {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("frame has no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("frame samples must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl std::ops::Deref for Frame {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.samples
    }
}

/// One-sided power spectrum over bins `0..=n_fft/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub values: Vec<f64>,
    /// Hz per bin, `sample_rate / n_fft`.
    pub bin_width: f64,
}

impl PowerSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `n_fft` implied by the one-sided length (assumes even `n_fft`).
    pub fn n_fft(&self) -> usize {
        2 * (self.values.len() - 1)
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }
}

/// FFT plan for a fixed `n_fft`; cheap to clone and safe to share.
#[derive(Clone)]
pub struct SpectralEngine {
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralEngine")
            .field("n_fft", &self.n_fft)
            .finish()
    }
}

impl SpectralEngine {
    pub fn new(n_fft: usize) -> Result<Self> {
        if n_fft < 2 || !n_fft.is_multiple_of(2) {
            return Err(Error::InvalidLength(format!(
                "n_fft must be even and at least 2, got {n_fft}"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self { n_fft, fft })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn num_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn check(&self, samples: &[f64], taper: &[f64]) -> Result<()> {
        if samples.len() != taper.len() {
            return Err(Error::Shape(format!(
                "window length {} does not match frame length {}",
                taper.len(),
                samples.len()
            )));
        }
        if samples.len() > self.n_fft {
            return Err(Error::Shape(format!(
                "frame length {} exceeds n_fft {}",
                samples.len(),
                self.n_fft
            )));
        }
        Ok(())
    }

    fn transform(&self, samples: &[f64], taper: &[f64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(
            samples
                .iter()
                .zip(taper)
                .map(|(x, w)| Complex64::new(x * w, 0.0)),
        );
        buf.resize(self.n_fft, Complex64::new(0.0, 0.0));
        self.fft.process(buf);
    }

    /// Writes `|DFT(taper * samples)|^2` for bins `0..=n_fft/2` into `out`.
    /// `buf` is scratch space reused across calls.
    pub fn power_into(
        &self,
        samples: &[f64],
        taper: &[f64],
        buf: &mut Vec<Complex64>,
        out: &mut [f64],
    ) -> Result<()> {
        self.check(samples, taper)?;
        if out.len() != self.num_bins() {
            return Err(Error::Shape(format!(
                "output has {} bins, expected {}",
                out.len(),
                self.num_bins()
            )));
        }
        self.transform(samples, taper, buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.norm_sqr();
        }
        Ok(())
    }

    pub fn power(&self, samples: &[f64], taper: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_bins()];
        let mut buf = Vec::with_capacity(self.n_fft);
        self.power_into(samples, taper, &mut buf, &mut out)?;
        Ok(out)
    }

    /// Two-sided power over all `n_fft` bins.
    pub fn full_power(&self, samples: &[f64], taper: &[f64]) -> Result<Vec<f64>> {
        self.check(samples, taper)?;
        let mut buf = Vec::with_capacity(self.n_fft);
        self.transform(samples, taper, &mut buf);
        Ok(buf.iter().map(|c| c.norm_sqr()).collect())
    }
}

/// Splits `signal` into frames of `config.frame_length` samples with hop
/// `config.frame_shift`. A trailing partial frame is dropped.
pub fn frame_signal(signal: &[f64], config: &FeatureConfig) -> Result<Vec<Frame>> {
    let n = frame_count(signal.len(), config.frame_length, config.frame_shift)?;
    (0..n)
        .map(|i| {
            let start = i * config.frame_shift;
            Frame::new(
                signal[start..start + config.frame_length].to_vec(),
                config.sample_rate,
            )
        })
        .collect()
}

/// Number of full frames, `floor((len - frame_length) / shift) + 1`.
pub fn frame_count(len: usize, frame_length: usize, frame_shift: usize) -> Result<usize> {
    if frame_length == 0 || frame_shift == 0 {
        return Err(Error::Config(
            "frame_length and frame_shift must be positive".into(),
        ));
    }
    if len < frame_length {
        return Err(Error::EmptyInput(format!(
            "signal of {len} samples is shorter than one frame of {frame_length}"
        )));
    }
    Ok((len - frame_length) / frame_shift + 1)
}

/// Windowed DFT power spectrum; the windowed frame is zero-padded to `n_fft`.
pub fn real_dft_power(frame: &Frame, window: &Window, n_fft: usize) -> Result<PowerSpectrum> {
    let engine = SpectralEngine::new(n_fft)?;
    let values = engine.power(frame.samples(), window.coefficients())?;
    Ok(PowerSpectrum {
        values,
        bin_width: frame.sample_rate() as f64 / n_fft as f64,
    })
}

/// Two-sided counterpart of [`real_dft_power`], all `n_fft` bins.
pub fn full_dft_power(frame: &Frame, window: &Window, n_fft: usize) -> Result<Vec<f64>> {
    SpectralEngine::new(n_fft)?.full_power(frame.samples(), window.coefficients())
}

//! Sine-weighted cepstral estimator (SWCE) tapers and the weighted
//! multi-taper power spectrum.
//!
//! A multi-taper spectrum is `S(f) = sum_j lambda(j) * P_j(f)` where `P_j` is
//! the power spectrum of the frame under taper `j`. The tapers are static;
//! only the weights are ever learned, so `S` is linear in the weights and the
//! sub-spectra `P_j` can be cached.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{hamming_coefficient, Frame, PowerSpectrum, SpectralEngine};
use crate::{Error, Result};

/// Tolerance for the unit-sum invariant of normalized weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Swce,
    SingleHamming,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiTaperConfig {
    pub num_tapers: usize,
    pub frame_length: usize,
    pub n_fft: usize,
}

impl MultiTaperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tapers == 0 {
            return Err(Error::Config("num_tapers must be at least 1".into()));
        }
        if self.frame_length == 0 || self.frame_length > self.n_fft {
            return Err(Error::Config(format!(
                "frame_length must be in 1..={}, got {}",
                self.n_fft, self.frame_length
            )));
        }
        Ok(())
    }
}

/// `K` static tapers of length `N` plus their strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BankDocument", into = "BankDocument")]
pub struct TaperBank {
    kind: BankKind,
    tapers: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// On-disk layout: `{kind, K, N, weights, tapers}`.
#[derive(Serialize, Deserialize)]
struct BankDocument {
    kind: BankKind,
    #[serde(rename = "K")]
    num_tapers: usize,
    #[serde(rename = "N")]
    frame_length: usize,
    weights: Vec<f64>,
    tapers: Vec<Vec<f64>>,
}

impl TryFrom<BankDocument> for TaperBank {
    type Error = Error;

    fn try_from(doc: BankDocument) -> Result<Self> {
        if doc.tapers.len() != doc.num_tapers || doc.weights.len() != doc.num_tapers {
            return Err(Error::Shape(format!(
                "K = {} but found {} tapers and {} weights",
                doc.num_tapers,
                doc.tapers.len(),
                doc.weights.len()
            )));
        }
        if doc.tapers.iter().any(|t| t.len() != doc.frame_length) {
            return Err(Error::Shape(format!(
                "every taper must have N = {} samples",
                doc.frame_length
            )));
        }
        let mut bank = TaperBank::custom(doc.tapers, doc.weights)?;
        bank.kind = doc.kind;
        Ok(bank)
    }
}

impl From<TaperBank> for BankDocument {
    fn from(bank: TaperBank) -> Self {
        BankDocument {
            kind: bank.kind,
            num_tapers: bank.num_tapers(),
            frame_length: bank.frame_length(),
            weights: bank.weights,
            tapers: bank.tapers,
        }
    }
}

/// Taper `j` (1-based) of the sine family, `sqrt(2/(N+1)) sin(2 pi j (t+1) / (N+1))`
/// for sample index `t = 0..N-1`.
pub fn swce_taper(j: usize, n: usize) -> Vec<f64> {
    let m = (n + 1) as f64;
    let scale = (2.0 / m).sqrt();
    (0..n)
        .map(|t| scale * (2.0 * PI * (j * (t + 1)) as f64 / m).sin())
        .collect()
}

/// SWCE weights `sin(2 pi j/(N+1)) / sum_{k=0..K} sin(2 pi k/(N+1))`, `j = 1..K`.
pub fn swce_weights(k: usize, n: usize) -> Vec<f64> {
    let m = (n + 1) as f64;
    let raw: Vec<f64> = (1..=k).map(|j| (2.0 * PI * j as f64 / m).sin()).collect();
    // the k = 0 term of the denominator is sin(0) = 0
    let denom: f64 = (0..=k).map(|j| (2.0 * PI * j as f64 / m).sin()).sum();
    raw.into_iter().map(|r| r / denom).collect()
}

fn check_swce_shape(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidLength("need at least one taper".into()));
    }
    if n < 2 {
        return Err(Error::InvalidLength(format!(
            "frame length must be at least 2, got {n}"
        )));
    }
    if 2 * k > n {
        return Err(Error::DegenerateTaper(format!(
            "K = {k} must be below (N+1)/2 = {} for N = {n}; higher sine tapers alias",
            (n + 1) as f64 / 2.0
        )));
    }
    Ok(())
}

pub fn make_swce_bank(k: usize, n: usize) -> Result<TaperBank> {
    check_swce_shape(k, n)?;
    Ok(TaperBank {
        kind: BankKind::Swce,
        tapers: (1..=k).map(|j| swce_taper(j, n)).collect(),
        weights: swce_weights(k, n),
    })
}

impl TaperBank {
    /// The single Hamming-window estimator expressed as a one-taper bank.
    pub fn single_hamming(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidLength(format!(
                "frame length must be at least 2, got {n}"
            )));
        }
        Ok(Self {
            kind: BankKind::SingleHamming,
            tapers: vec![(0..n).map(|t| hamming_coefficient(t, n)).collect()],
            weights: vec![1.0],
        })
    }

    pub fn custom(tapers: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if tapers.is_empty() {
            return Err(Error::InvalidLength("need at least one taper".into()));
        }
        if tapers.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} tapers but {} weights",
                tapers.len(),
                weights.len()
            )));
        }
        let n = tapers[0].len();
        if n == 0 || tapers.iter().any(|t| t.len() != n) {
            return Err(Error::Shape("tapers must share a non-zero length".into()));
        }
        if tapers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("taper samples must be finite".into()));
        }
        check_weights(&weights)?;
        Ok(Self {
            kind: BankKind::Custom,
            tapers,
            weights,
        })
    }

    /// Same tapers with replacement weights, e.g. learned ones.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.num_tapers() {
            return Err(Error::Shape(format!(
                "bank has {} tapers but {} weights given",
                self.num_tapers(),
                weights.len()
            )));
        }
        check_weights(&weights)?;
        Ok(Self {
            kind: self.kind,
            tapers: self.tapers.clone(),
            weights,
        })
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn num_tapers(&self) -> usize {
        self.tapers.len()
    }

    pub fn frame_length(&self) -> usize {
        self.tapers[0].len()
    }

    pub fn tapers(&self) -> &[Vec<f64>] {
        &self.tapers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some((j, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::Constraint(format!(
            "taper weight {} must be finite and > 0, got {w}",
            j + 1
        )));
    }
    Ok(())
}

/// Inner-product deviations of a taper family from orthonormality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orthonormality {
    /// max over `j != j'` of `|<w_j, w_j'>|`
    pub max_cross: f64,
    /// max over `j` of `|<w_j, w_j> - 1|`
    pub max_self: f64,
}

impl Orthonormality {
    pub fn max_deviation(&self) -> f64 {
        self.max_cross.max(self.max_self)
    }
}

pub fn orthonormality(tapers: &[Vec<f64>]) -> Orthonormality {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut out = Orthonormality {
        max_cross: 0.0,
        max_self: 0.0,
    };
    for (i, a) in tapers.iter().enumerate() {
        out.max_self = out.max_self.max((dot(a, a) - 1.0).abs());
        for b in &tapers[i + 1..] {
            out.max_cross = out.max_cross.max(dot(a, b).abs());
        }
    }
    out
}

pub fn taper_orthonormality_check(bank: &TaperBank) -> Orthonormality {
    orthonormality(bank.tapers())
}

/// Holds an FFT plan and a bank; computes sub-spectra and their weighted sum.
#[derive(Debug, Clone)]
pub struct MultiTaperEstimator {
    engine: SpectralEngine,
    bank: TaperBank,
}

impl MultiTaperEstimator {
    pub fn new(bank: TaperBank, n_fft: usize) -> Result<Self> {
        let engine = SpectralEngine::new(n_fft)?;
        if bank.frame_length() > n_fft {
            return Err(Error::Shape(format!(
                "taper length {} exceeds n_fft {n_fft}",
                bank.frame_length()
            )));
        }
        Ok(Self { engine, bank })
    }

    pub fn bank(&self) -> &TaperBank {
        &self.bank
    }

    pub fn engine(&self) -> &SpectralEngine {
        &self.engine
    }

    pub fn num_bins(&self) -> usize {
        self.engine.num_bins()
    }

    /// Fills `out` (`K * num_bins`, taper-major) with the sub-spectra.
    pub fn sub_spectra_into(
        &self,
        samples: &[f64],
        buf: &mut Vec<Complex64>,
        out: &mut [f64],
    ) -> Result<()> {
        let bins = self.num_bins();
        if out.len() != bins * self.bank.num_tapers() {
            return Err(Error::Shape(format!(
                "sub-spectra buffer has {} values, expected {}",
                out.len(),
                bins * self.bank.num_tapers()
            )));
        }
        for (taper, chunk) in self.bank.tapers().iter().zip(out.chunks_mut(bins)) {
            self.engine.power_into(samples, taper, buf, chunk)?;
        }
        Ok(())
    }

    pub fn sub_spectra(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_bins() * self.bank.num_tapers()];
        let mut buf = Vec::with_capacity(self.engine.n_fft());
        self.sub_spectra_into(samples, &mut buf, &mut out)?;
        Ok(out)
    }

    pub fn power(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let subs = self.sub_spectra(samples)?;
        Ok(combine_sub_spectra(&subs, self.bank.weights(), self.num_bins()))
    }
}

/// `sum_j weights[j] * subs[j]` over taper-major sub-spectra. Weights are not
/// checked for sign, so unconstrained training can evaluate negative weights.
pub fn combine_sub_spectra(subs: &[f64], weights: &[f64], bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; bins];
    combine_sub_spectra_into(subs, weights, &mut out);
    out
}

pub fn combine_sub_spectra_into(subs: &[f64], weights: &[f64], out: &mut [f64]) {
    let bins = out.len();
    out.fill(0.0);
    for (w, chunk) in weights.iter().zip(subs.chunks(bins)) {
        for (o, p) in out.iter_mut().zip(chunk) {
            *o += w * p;
        }
    }
}

/// Weighted multi-taper power spectrum of `frame`.
pub fn multitaper_power(frame: &Frame, bank: &TaperBank, n_fft: usize) -> Result<PowerSpectrum> {
    let est = MultiTaperEstimator::new(bank.clone(), n_fft)?;
    Ok(PowerSpectrum {
        values: est.power(frame.samples())?,
        bin_width: frame.sample_rate() as f64 / n_fft as f64,
    })
}

/// The `K` uncombined single-taper spectra `P_j`.
pub fn sub_spectra(frame: &Frame, bank: &TaperBank, n_fft: usize) -> Result<Vec<PowerSpectrum>> {
    let est = MultiTaperEstimator::new(bank.clone(), n_fft)?;
    let bins = est.num_bins();
    let bin_width = frame.sample_rate() as f64 / n_fft as f64;
    Ok(est
        .sub_spectra(frame.samples())?
        .chunks(bins)
        .map(|c| PowerSpectrum {
            values: c.to_vec(),
            bin_width,
        })
        .collect())
}

//! Mel filterbank, log compression and orthonormal DCT-II.
//!
//! The forward path keeps enough state ([`MfccTrace`]) to run the exact
//! vector-Jacobian product back to the power spectrum, which the optimizer
//! needs for learning taper weights.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{frame_count, PowerSpectrum};
use crate::multitaper::{combine_sub_spectra_into, make_swce_bank, MultiTaperEstimator, TaperBank};
use crate::{Error, Result};

/// Spectrum estimator named in a [`FeatureConfig`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    #[default]
    SingleHamming,
    Swce { num_tapers: usize },
}

impl EstimatorSpec {
    pub fn build(&self, frame_length: usize) -> Result<TaperBank> {
        match *self {
            EstimatorSpec::SingleHamming => TaperBank::single_hamming(frame_length),
            EstimatorSpec::Swce { num_tapers } => make_swce_bank(num_tapers, frame_length),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub n_fft: usize,
    pub num_filters: usize,
    pub num_ceps: usize,
    pub f_low: f64,
    pub f_high: f64,
    pub log_floor: f64,
    /// Pre-emphasis coefficient; off when `None`.
    pub preemphasis: Option<f64>,
    /// Standard deviation of additive Gaussian dither; off when 0.
    pub dither: f64,
    pub dither_seed: u64,
    pub estimator: EstimatorSpec,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length: 400,
            frame_shift: 160,
            n_fft: 512,
            num_filters: 40,
            num_ceps: 40,
            f_low: 20.0,
            f_high: 7600.0,
            log_floor: 1e-10,
            preemphasis: None,
            dither: 0.0,
            dither_seed: 0,
            estimator: EstimatorSpec::SingleHamming,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.sample_rate == 0 {
            return fail("sample_rate", "must be positive".into());
        }
        if self.frame_length < 2 {
            return fail("frame_length", format!("must be >= 2, got {}", self.frame_length));
        }
        if self.frame_shift == 0 {
            return fail("frame_shift", "must be positive".into());
        }
        if self.n_fft < self.frame_length || !self.n_fft.is_multiple_of(2) {
            return fail(
                "n_fft",
                format!("must be even and >= frame_length, got {}", self.n_fft),
            );
        }
        if self.num_filters == 0 {
            return fail("num_filters", "must be positive".into());
        }
        if self.num_ceps == 0 || self.num_ceps > self.num_filters {
            return fail(
                "num_ceps",
                format!("must be in 1..={}, got {}", self.num_filters, self.num_ceps),
            );
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f_low >= 0.0 && self.f_low < self.f_high && self.f_high <= nyquist) {
            return fail(
                "f_high",
                format!(
                    "need 0 <= f_low < f_high <= {nyquist}, got {}..{}",
                    self.f_low, self.f_high
                ),
            );
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return fail("log_floor", format!("must be > 0, got {}", self.log_floor));
        }
        if let Some(a) = self.preemphasis {
            if !(0.0..1.0).contains(&a) {
                return fail("preemphasis", format!("must be in [0, 1), got {a}"));
            }
        }
        if !(self.dither >= 0.0 && self.dither.is_finite()) {
            return fail("dither", format!("must be >= 0, got {}", self.dither));
        }
        Ok(())
    }

    /// Stable 64-bit digest of the config together with the estimator bank.
    pub fn hash_with(&self, bank: &TaperBank) -> u64 {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.update(serde_json::to_vec(bank).expect("bank serializes"));
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centers uniformly spaced on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    num_filters: usize,
    num_bins: usize,
    /// row-major `num_filters x num_bins`
    matrix: Vec<f64>,
    /// non-zero column range per row
    support: Vec<(usize, usize)>,
    centers_hz: Vec<f64>,
    f_low: f64,
    f_high: f64,
}

impl MelFilterbank {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        config.validate()?;
        let num_bins = config.n_fft / 2 + 1;
        let f = config.num_filters;
        let (lo, hi) = (hz_to_mel(config.f_low), hz_to_mel(config.f_high));
        let edges: Vec<f64> = (0..f + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (f + 1) as f64))
            .collect();
        let bin_hz = config.sample_rate as f64 / config.n_fft as f64;

        let mut matrix = vec![0.0; f * num_bins];
        let mut support = Vec::with_capacity(f);
        for m in 0..f {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut matrix[m * num_bins..(m + 1) * num_bins];
            for (k, v) in row.iter_mut().enumerate() {
                let hz = k as f64 * bin_hz;
                *v = if hz > l && hz <= c {
                    (hz - l) / (c - l)
                } else if hz > c && hz < r {
                    (r - hz) / (r - c)
                } else {
                    0.0
                };
            }
            let first = row.iter().position(|&v| v > 0.0);
            let last = row.iter().rposition(|&v| v > 0.0);
            match (first, last) {
                (Some(a), Some(b)) => support.push((a, b + 1)),
                _ => {
                    return Err(Error::Config(format!(
                        "num_filters: mel filter {m} ({l:.1}-{r:.1} Hz) covers no FFT bin; \
                         reduce num_filters or increase n_fft"
                    )))
                }
            }
        }
        Ok(Self {
            num_filters: f,
            num_bins,
            matrix,
            support,
            centers_hz: edges[1..=f].to_vec(),
            f_low: config.f_low,
            f_high: config.f_high,
        })
    }

    /// Copy with every row scaled to unit sum.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.matrix.chunks_mut(self.num_bins) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn band(&self) -> (f64, f64) {
        (self.f_low, self.f_high)
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.matrix[m * self.num_bins..(m + 1) * self.num_bins]
    }

    pub fn support(&self, m: usize) -> (usize, usize) {
        self.support[m]
    }

    pub fn apply(&self, spectrum: &[f64], energies: &mut [f64]) {
        for (m, e) in energies.iter_mut().enumerate() {
            let (a, b) = self.support[m];
            let row = &self.row(m)[a..b];
            *e = row.iter().zip(&spectrum[a..b]).map(|(w, s)| w * s).sum();
        }
    }

    /// `grad_spectrum += M^T grad_energies`
    pub fn apply_transpose_acc(&self, grad_energies: &[f64], grad_spectrum: &mut [f64]) {
        for (m, g) in grad_energies.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let (a, b) = self.support[m];
            for (out, w) in grad_spectrum[a..b].iter_mut().zip(&self.row(m)[a..b]) {
                *out += g * w;
            }
        }
    }
}

/// Orthonormal DCT-II of size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dct {
    n: usize,
    /// row k holds basis vector k
    basis: Vec<f64>,
}

impl Dct {
    pub fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        let norm = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let s = if k == 0 { norm / SQRT_2 } else { norm };
            for m in 0..n {
                basis[k * n + m] = s * (PI * k as f64 * (m as f64 + 0.5) / n as f64).cos();
            }
        }
        Self { n, basis }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// First `out.len()` coefficients of the transform of `x`.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.basis[k * self.n..(k + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum();
        }
    }

    /// Inverse transform from a (possibly truncated) coefficient vector.
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, c) in coeffs.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(&self.basis[k * self.n..(k + 1) * self.n]) {
                *o += c * b;
            }
        }
    }
}

/// Intermediate values of one MFCC evaluation, needed by [`mfcc_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MfccTrace {
    pub energies: Vec<f64>,
    pub cepstra: Vec<f64>,
}

/// Shared MFCC stage: filterbank, DCT and floor.
#[derive(Debug, Clone)]
pub struct MfccStage {
    pub filterbank: MelFilterbank,
    pub dct: Dct,
    pub num_ceps: usize,
    pub log_floor: f64,
}

impl MfccStage {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        Ok(Self {
            filterbank: MelFilterbank::new(config)?,
            dct: Dct::new(config.num_filters),
            num_ceps: config.num_ceps,
            log_floor: config.log_floor,
        })
    }

    pub fn forward(&self, spectrum: &[f64]) -> Result<MfccTrace> {
        if spectrum.len() != self.filterbank.num_bins() {
            return Err(Error::Shape(format!(
                "spectrum has {} bins, filterbank expects {}",
                spectrum.len(),
                self.filterbank.num_bins()
            )));
        }
        let mut energies = vec![0.0; self.filterbank.num_filters()];
        self.filterbank.apply(spectrum, &mut energies);
        let logs: Vec<f64> = energies
            .iter()
            .map(|&e| e.max(self.log_floor).ln())
            .collect();
        let mut cepstra = vec![0.0; self.num_ceps];
        self.dct.forward(&logs, &mut cepstra);
        Ok(MfccTrace { energies, cepstra })
    }

    /// Accumulates `d loss / d spectrum` into `grad_spectrum` given
    /// `d loss / d cepstra`. Floored filterbank energies pass zero gradient.
    pub fn backward_acc(&self, trace: &MfccTrace, grad_ceps: &[f64], grad_spectrum: &mut [f64]) {
        let mut grad_log = vec![0.0; self.filterbank.num_filters()];
        self.dct.inverse(grad_ceps, &mut grad_log);
        for (g, &e) in grad_log.iter_mut().zip(&trace.energies) {
            *g = if e > self.log_floor { *g / e } else { 0.0 };
        }
        self.filterbank.apply_transpose_acc(&grad_log, grad_spectrum);
    }
}

/// MFCCs of one power spectrum: DCT-II (orthonormal) of
/// `ln(max(fb * spectrum, log_floor))`, first `num_ceps` coefficients.
pub fn mfcc(
    spectrum: &PowerSpectrum,
    fb: &MelFilterbank,
    num_ceps: usize,
    log_floor: f64,
) -> Result<Vec<f64>> {
    if num_ceps == 0 || num_ceps > fb.num_filters() {
        return Err(Error::Config(format!(
            "num_ceps must be in 1..={}, got {num_ceps}",
            fb.num_filters()
        )));
    }
    if log_floor.is_nan() || log_floor <= 0.0 {
        return Err(Error::Config(format!("log_floor must be > 0, got {log_floor}")));
    }
    let stage = MfccStage {
        filterbank: fb.clone(),
        dct: Dct::new(fb.num_filters()),
        num_ceps,
        log_floor,
    };
    Ok(stage.forward(&spectrum.values)?.cepstra)
}

/// Vector-Jacobian product of [`mfcc`]: returns `J^T grad_ceps` over spectrum bins.
pub fn mfcc_backward(
    spectrum: &PowerSpectrum,
    fb: &MelFilterbank,
    log_floor: f64,
    grad_ceps: &[f64],
) -> Result<Vec<f64>> {
    let stage = MfccStage {
        filterbank: fb.clone(),
        dct: Dct::new(fb.num_filters()),
        num_ceps: grad_ceps.len(),
        log_floor,
    };
    let trace = stage.forward(&spectrum.values)?;
    let mut grad = vec![0.0; fb.num_bins()];
    stage.backward_acc(&trace, grad_ceps, &mut grad);
    Ok(grad)
}

/// Per-frame MFCCs of one utterance, row-major `frames x dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub dims: usize,
    pub data: Vec<f64>,
    pub source_id: String,
    pub config_hash: u64,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dims)
    }
}

/// Signal conditioning applied before framing.
pub fn condition_signal(signal: &[f64], config: &FeatureConfig) -> Vec<f64> {
    let mut out = signal.to_vec();
    if config.dither > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.dither_seed);
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += config.dither * z;
        }
    }
    if let Some(a) = config.preemphasis {
        for t in (1..out.len()).rev() {
            out[t] -= a * out[t - 1];
        }
    }
    out
}

/// Front-end for one estimator: frames, sub-spectra, spectrum and MFCCs.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    estimator: MultiTaperEstimator,
    stage: MfccStage,
    config_hash: u64,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig, bank: TaperBank) -> Result<Self> {
        config.validate()?;
        if bank.frame_length() != config.frame_length {
            return Err(Error::Shape(format!(
                "taper length {} does not match frame_length {}",
                bank.frame_length(),
                config.frame_length
            )));
        }
        let config_hash = config.hash_with(&bank);
        Ok(Self {
            stage: MfccStage::new(&config)?,
            estimator: MultiTaperEstimator::new(bank, config.n_fft)?,
            config,
            config_hash,
        })
    }

    /// Uses the estimator named in `config.estimator`.
    pub fn from_config(config: FeatureConfig) -> Result<Self> {
        let bank = config.estimator.build(config.frame_length)?;
        Self::new(config, bank)
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn bank(&self) -> &TaperBank {
        self.estimator.bank()
    }

    pub fn estimator(&self) -> &MultiTaperEstimator {
        &self.estimator
    }

    pub fn stage(&self) -> &MfccStage {
        &self.stage
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn num_bins(&self) -> usize {
        self.estimator.num_bins()
    }

    /// Conditioned signal sliced into frames (borrowed windows of `out`).
    fn frames<'a>(&self, conditioned: &'a [f64]) -> Result<Vec<&'a [f64]>> {
        let c = &self.config;
        let n = frame_count(conditioned.len(), c.frame_length, c.frame_shift)?;
        Ok((0..n)
            .map(|i| &conditioned[i * c.frame_shift..i * c.frame_shift + c.frame_length])
            .collect())
    }

    /// Sub-spectra of every frame, `frames x (K * bins)`.
    pub fn utterance_sub_spectra(&self, signal: &[f64]) -> Result<Vec<Vec<f64>>> {
        let conditioned = condition_signal(signal, &self.config);
        self.frames(&conditioned)?
            .par_iter()
            .map_init(
                || Vec::with_capacity(self.config.n_fft),
                |buf, frame| {
                    let mut out = vec![0.0; self.num_bins() * self.bank().num_tapers()];
                    self.estimator.sub_spectra_into(frame, buf, &mut out)?;
                    Ok(out)
                },
            )
            .collect()
    }

    pub fn extract(&self, signal: &[f64], source_id: &str) -> Result<FeatureMatrix> {
        let bins = self.num_bins();
        let weights = self.bank().weights();
        let rows: Vec<Vec<f64>> = self
            .utterance_sub_spectra(signal)?
            .par_iter()
            .map(|subs| {
                let mut spectrum = vec![0.0; bins];
                combine_sub_spectra_into(subs, weights, &mut spectrum);
                self.stage.forward(&spectrum).map(|t| t.cepstra)
            })
            .collect::<Result<_>>()?;
        let frames = rows.len();
        Ok(FeatureMatrix {
            frames,
            dims: self.config.num_ceps,
            data: rows.into_iter().flatten().collect(),
            source_id: source_id.to_string(),
            config_hash: self.config_hash,
        })
    }
}

/// Per-frame MFCCs of `signal` using the estimator named in `config`.
pub fn extract_utterance(signal: &[f64], config: &FeatureConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::from_config(config.clone())?.extract(signal, "")
}

//! Seeded toy speaker corpus: each speaker is a pair of sinusoids at
//! speaker-specific frequencies, jittered per utterance, in white noise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::optimizer::LabeledUtterance;
use crate::wav::{quantize, read_wav, write_wav, SAMPLE_RATE};
use crate::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyCorpusSpec {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub duration_s: f64,
    pub seed: u64,
    /// range of the lower speaker frequency, Hz
    pub low_band: [f64; 2],
    /// range of the upper speaker frequency, Hz
    pub high_band: [f64; 2],
    /// per-utterance uniform jitter of each frequency, +/- Hz
    pub jitter_hz: f64,
    pub snr_db: f64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            num_speakers: 4,
            utterances_per_speaker: 10,
            duration_s: 1.0,
            seed: 0,
            low_band: [250.0, 900.0],
            high_band: [1000.0, 3000.0],
            jitter_hz: 30.0,
            snr_db: 20.0,
        }
    }
}

impl ToyCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.num_speakers < 2 {
            return fail("num_speakers", format!("need at least 2, got {}", self.num_speakers));
        }
        if self.utterances_per_speaker == 0 {
            return fail("utterances_per_speaker", "must be at least 1".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return fail("duration_s", format!("must be > 0, got {}", self.duration_s));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        for (name, band) in [("low_band", self.low_band), ("high_band", self.high_band)] {
            if !(band[0] > 0.0 && band[0] <= band[1] && band[1] < nyquist) {
                return fail(name, format!("must satisfy 0 < lo <= hi < {nyquist}, got {band:?}"));
            }
        }
        if !(self.jitter_hz >= 0.0 && self.jitter_hz.is_finite()) {
            return fail("jitter_hz", format!("must be >= 0, got {}", self.jitter_hz));
        }
        if !self.snr_db.is_finite() {
            return fail("snr_db", "must be finite".into());
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * SAMPLE_RATE as f64).round() as usize
    }
}

/// `clean` plus white Gaussian noise at `snr_db` below its mean power.
fn add_noise<R: Rng>(clean: &[f64], snr_db: f64, rng: &mut R) -> Vec<f64> {
    let power = clean.iter().map(|x| x * x).sum::<f64>() / clean.len().max(1) as f64;
    let noise_std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    clean
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(rng);
            x + noise_std * z
        })
        .collect()
}

/// One utterance as 16-bit codes.
struct RawUtterance {
    id: String,
    label: usize,
    codes: Vec<i16>,
}

fn generate(spec: &ToyCorpusSpec) -> Result<Vec<RawUtterance>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let templates: Vec<(f64, f64)> = (0..spec.num_speakers)
        .map(|_| {
            (
                rng.random_range(spec.low_band[0]..=spec.low_band[1]),
                rng.random_range(spec.high_band[0]..=spec.high_band[1]),
            )
        })
        .collect();
    let n = spec.num_samples();
    let fs = SAMPLE_RATE as f64;
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = Vec::with_capacity(spec.num_speakers * spec.utterances_per_speaker);
    for (s, &(f1, f2)) in templates.iter().enumerate() {
        for u in 0..spec.utterances_per_speaker {
            let mut jitter = || {
                if spec.jitter_hz > 0.0 {
                    rng.random_range(-spec.jitter_hz..=spec.jitter_hz)
                } else {
                    0.0
                }
            };
            let (g1, g2) = (f1 + jitter(), f2 + jitter());
            let (p1, p2): (f64, f64) = (rng.random_range(0.0..tau), rng.random_range(0.0..tau));
            let clean: Vec<f64> = (0..n)
                .map(|t| {
                    let t = t as f64 / fs;
                    (tau * g1 * t + p1).sin() + 0.5 * (tau * g2 * t + p2).sin()
                })
                .collect();
            let noisy = add_noise(&clean, spec.snr_db, &mut rng);
            let peak = noisy.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let gain = if peak > 0.0 { 0.5 / peak } else { 1.0 };
            out.push(RawUtterance {
                id: format!("spk{s:02}_utt{u:03}"),
                label: s,
                codes: noisy.iter().map(|x| quantize(gain * x)).collect(),
            });
        }
    }
    Ok(out)
}

/// The corpus in memory, with exactly the samples that [`write_corpus`] stores.
pub fn synthesize(spec: &ToyCorpusSpec) -> Result<Vec<LabeledUtterance>> {
    Ok(generate(spec)?
        .into_iter()
        .map(|r| LabeledUtterance {
            id: r.id,
            label: r.label,
            signal: r.codes.iter().map(|&c| c as f64 / 32768.0).collect(),
        })
        .collect())
}

/// Writes one WAV per utterance and a `path,label` manifest into `dir`.
/// Returns the manifest path.
pub fn write_corpus(spec: &ToyCorpusSpec, dir: &Path) -> Result<PathBuf> {
    let utterances = generate(spec)?;
    std::fs::create_dir_all(dir)?;
    let manifest = dir.join(MANIFEST_NAME);
    let mut w = csv::Writer::from_path(&manifest)?;
    w.write_record(["path", "label"])?;
    for u in &utterances {
        let name = format!("{}.wav", u.id);
        write_wav(&dir.join(&name), &u.codes, SAMPLE_RATE)?;
        w.write_record([name, u.label.to_string()])?;
    }
    w.flush()?;
    Ok(manifest)
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: PathBuf,
    label: String,
}

/// Reads a `path,label` manifest. Relative paths resolve against the
/// manifest's directory; labels are mapped to indices in sorted order.
pub fn read_manifest(path: &Path) -> Result<Vec<LabeledUtterance>> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<ManifestRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} lists no utterances", path.display())));
    }
    let labels: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        names.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
            (Ok(x), Ok(y)) => x.cmp(&y),
            _ => a.cmp(b),
        });
        names.dedup();
        names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
    };
    rows.iter()
        .map(|r| {
            let file = if r.path.is_absolute() { r.path.clone() } else { base.join(&r.path) };
            Ok(LabeledUtterance {
                id: r.path.display().to_string(),
                label: labels[r.label.as_str()],
                signal: read_wav(&file)?.samples,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_lengths() {
        let spec = ToyCorpusSpec {
            duration_s: 0.5,
            ..ToyCorpusSpec::default()
        };
        let c = synthesize(&spec).unwrap();
        assert_eq!(c.len(), 40);
        assert!(c.iter().all(|u| u.signal.len() == 8000));
        assert_eq!(c.iter().filter(|u| u.label == 3).count(), 10);
    }

    #[test]
    fn seeded_and_distinct() {
        let spec = ToyCorpusSpec {
            duration_s: 0.1,
            ..ToyCorpusSpec::default()
        };
        assert_eq!(synthesize(&spec).unwrap(), synthesize(&spec).unwrap());
        let other = ToyCorpusSpec { seed: 1, ..spec.clone() };
        assert_ne!(synthesize(&spec).unwrap(), synthesize(&other).unwrap());
    }

    #[test]
    fn noise_at_requested_snr() {
        let clean: Vec<f64> = (0..64_000).map(|t| (0.01 * t as f64).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy = add_noise(&clean, 20.0, &mut rng);
        let ps: f64 = clean.iter().map(|x| x * x).sum();
        let pn: f64 = noisy.iter().zip(&clean).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 20.0).abs() < 0.1, "{snr}");
    }

    #[test]
    fn files_match_memory_and_manifest() {
        let spec = ToyCorpusSpec {
            num_speakers: 2,
            utterances_per_speaker: 2,
            duration_s: 0.05,
            ..ToyCorpusSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(&spec, dir.path()).unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        assert_eq!(text.lines().next().unwrap(), "path,label");
        assert_eq!(text.lines().count(), 5);
        let from_disk = read_manifest(&manifest).unwrap();
        let mem = synthesize(&spec).unwrap();
        for (a, b) in from_disk.iter().zip(&mem) {
            assert_eq!(a.signal, b.signal);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn invalid_spec_names_field() {
        let spec = ToyCorpusSpec {
            num_speakers: 1,
            ..ToyCorpusSpec::default()
        };
        assert!(synthesize(&spec).unwrap_err().to_string().contains("num_speakers"));
    }
}

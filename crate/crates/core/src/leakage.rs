//! Spectral leakage on synthetic on-bin sinusoids: distance to an impulsive
//! ground truth and the width of the region above an attenuation threshold.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsp::{Frame, PowerSpectrum};
use crate::multitaper::{multitaper_power, TaperBank};
use crate::{Error, Result};

/// Floor applied to spectra before taking distances, matching the MFCC log floor.
pub const SPECTRUM_FLOOR: f64 = 1e-10;
/// Relative floor for dB conversion, i.e. -300 dB.
pub const DB_FLOOR: f64 = 1e-30;
pub const DEFAULT_THRESHOLD_DB: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSignalSpec {
    /// tone frequencies as DFT bin indices
    pub bins: Vec<usize>,
    pub sample_rate: u32,
    pub n_fft: usize,
    /// samples
    pub duration: usize,
}

impl Default for SyntheticSignalSpec {
    fn default() -> Self {
        Self {
            bins: vec![16, 32],
            sample_rate: 16_000,
            n_fft: 512,
            duration: 16_000,
        }
    }
}

impl SyntheticSignalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return Err(Error::Config(format!("n_fft: must be even and >= 2, got {}", self.n_fft)));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate: must be positive".into()));
        }
        if self.duration == 0 {
            return Err(Error::Config("duration: must be at least one sample".into()));
        }
        if let Some(&b) = self.bins.iter().find(|&&b| b == 0 || b >= self.n_fft / 2) {
            return Err(Error::Config(format!(
                "bins: {b} is outside (0, {})",
                self.n_fft / 2
            )));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        self.sample_rate as f64 / self.n_fft as f64
    }

    pub fn tone_hz(&self) -> Vec<f64> {
        self.bins.iter().map(|&b| b as f64 * self.bin_width()).collect()
    }
}

/// `sum_n sin(2 pi n t / n_fft)` for `t = 0..duration`.
pub fn synth_signal(spec: &SyntheticSignalSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n_fft = spec.n_fft as f64;
    Ok((0..spec.duration)
        .map(|t| {
            spec.bins
                .iter()
                .map(|&n| (2.0 * std::f64::consts::PI * ((n * t) % spec.n_fft) as f64 / n_fft).sin())
                .sum()
        })
        .collect())
}

/// Unit power at every tone bin and `floor` elsewhere.
pub fn ground_truth_spectrum(spec: &SyntheticSignalSpec, floor: f64) -> Result<PowerSpectrum> {
    spec.validate()?;
    let mut values = vec![floor; spec.n_fft / 2 + 1];
    for &b in &spec.bins {
        values[b] = 1.0;
    }
    Ok(PowerSpectrum {
        values,
        bin_width: spec.bin_width(),
    })
}

/// Mean over bins of `P/Q - ln(P/Q) - 1`.
pub fn itakura_saito(estimate: &PowerSpectrum, truth: &PowerSpectrum) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Shape(format!(
            "estimate has {} bins, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::EmptyInput("spectrum has no bins".into()));
    }
    let mut total = 0.0;
    for (f, (&p, &q)) in estimate.values.iter().zip(&truth.values).enumerate() {
        if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
            return Err(Error::Numeric(format!("bin {f}: nonpositive power ({p}, {q})")));
        }
        let x = p / q;
        total += x - x.ln() - 1.0;
    }
    Ok(total / estimate.len() as f64)
}

/// Peak-normalized copy of `s`, floored at `floor`.
pub fn normalize_peak(s: &PowerSpectrum, floor: f64) -> Result<PowerSpectrum> {
    let peak = s.values.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Numeric(format!("spectrum peak is {peak}")));
    }
    Ok(PowerSpectrum {
        values: s.values.iter().map(|v| (v / peak).max(floor)).collect(),
        bin_width: s.bin_width,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Width {
    pub center_hz: f64,
    pub n_left: usize,
    pub n_right: usize,
    /// `(n_right - n_left) * bin_width`
    pub raw_hz: f64,
    /// crossings located by linear interpolation in dB
    pub interpolated_hz: f64,
    /// a side hit the spectrum edge or the midpoint to a neighbouring tone
    pub clamped: bool,
}

fn db(ratio: f64) -> f64 {
    10.0 * ratio.max(DB_FLOOR).log10()
}

/// Width of the region around `center_hz` above `-threshold_db` relative to
/// the value at the center bin.
pub fn attenuation_width(estimate: &PowerSpectrum, center_hz: f64, threshold_db: f64) -> Result<Width> {
    attenuation_width_between(estimate, center_hz, threshold_db, &[])
}

/// As [`attenuation_width`], with each scan stopped at the midpoint to the
/// nearest of `other_tones_hz` on that side.
pub fn attenuation_width_between(
    estimate: &PowerSpectrum,
    center_hz: f64,
    threshold_db: f64,
    other_tones_hz: &[f64],
) -> Result<Width> {
    if !(threshold_db > 0.0 && threshold_db.is_finite()) {
        return Err(Error::Config(format!("threshold_db: must be > 0, got {threshold_db}")));
    }
    let bw = estimate.bin_width;
    let last = estimate.len().saturating_sub(1);
    let pos = center_hz / bw;
    let c = pos.round();
    if estimate.is_empty() || !(c >= 0.0 && c as usize <= last) {
        return Err(Error::InvalidCenter(format!("{center_hz} Hz is outside the spectrum")));
    }
    let c = c as usize;
    let reference = estimate.values[c];
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::InvalidCenter(format!(
            "value {reference} at center bin {c} cannot serve as reference"
        )));
    }
    let mut lo = 0usize;
    let mut hi = last;
    for &t in other_tones_hz {
        let b = t / bw;
        if b < c as f64 {
            lo = lo.max(((b + c as f64) / 2.0).ceil() as usize);
        } else if b > c as f64 {
            hi = hi.min(((b + c as f64) / 2.0).floor() as usize);
        }
    }
    let level = |i: usize| db(estimate.values[i] / reference);
    let floor_db = -threshold_db;

    let mut clamped = false;
    let right = (c + 1..=hi).find(|&i| level(i) <= floor_db);
    let (n_right, right_pos) = match right {
        Some(i) => {
            let (a, b) = (level(i - 1), level(i));
            (i, (i - 1) as f64 + (a - floor_db) / (a - b))
        }
        None => {
            clamped = true;
            (hi, hi as f64)
        }
    };
    let left = (lo..c).rev().find(|&i| level(i) <= floor_db);
    let (n_left, left_pos) = match left {
        Some(i) => {
            let (a, b) = (level(i + 1), level(i));
            (i, (i + 1) as f64 - (a - floor_db) / (a - b))
        }
        None => {
            clamped = true;
            (lo, lo as f64)
        }
    };
    Ok(Width {
        center_hz,
        n_left,
        n_right,
        raw_hz: (n_right - n_left) as f64 * bw,
        interpolated_hz: (right_pos - left_pos) * bw,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub estimator: String,
    pub num_tapers: usize,
    pub frame_length: usize,
    /// mean over bins, peak-normalized estimate against the floored truth
    pub is_distance: f64,
    /// one entry per tone, in tone order
    pub widths: Vec<Width>,
    /// peak-normalized spectrum in dB, floored at -300
    pub spectrum_db: Vec<f64>,
}

impl LeakageReport {
    pub fn width_at(&self, center_hz: f64) -> Option<&Width> {
        self.widths.iter().find(|w| (w.center_hz - center_hz).abs() < 1e-9)
    }
}

/// Analyzes the first `N` samples of the synthetic signal with each bank,
/// `N` being the bank's frame length.
pub fn leakage_study(
    estimators: &[(String, TaperBank)],
    spec: &SyntheticSignalSpec,
    threshold_db: f64,
) -> Result<Vec<LeakageReport>> {
    if estimators.is_empty() {
        return Err(Error::EmptyInput("no estimators given".into()));
    }
    let signal = synth_signal(spec)?;
    let truth = ground_truth_spectrum(spec, SPECTRUM_FLOOR)?;
    let tones = spec.tone_hz();
    estimators
        .iter()
        .map(|(name, bank)| {
            let n = bank.frame_length();
            if n > spec.n_fft || n > signal.len() {
                return Err(Error::Shape(format!(
                    "{name}: frame length {n} exceeds n_fft {} or duration {}",
                    spec.n_fft,
                    signal.len()
                )));
            }
            let frame = Frame::new(signal[..n].to_vec(), spec.sample_rate)?;
            let spectrum = multitaper_power(&frame, bank, spec.n_fft)?;
            let normalized = normalize_peak(&spectrum, SPECTRUM_FLOOR)?;
            let is_distance = itakura_saito(&normalized, &truth)?;
            let widths = tones
                .iter()
                .map(|&t| {
                    let others: Vec<f64> = tones.iter().copied().filter(|&o| o != t).collect();
                    attenuation_width_between(&spectrum, t, threshold_db, &others)
                })
                .collect::<Result<_>>()?;
            let peak = spectrum.values.iter().cloned().fold(0.0, f64::max);
            Ok(LeakageReport {
                estimator: name.clone(),
                num_tapers: bank.num_tapers(),
                frame_length: n,
                is_distance,
                widths,
                spectrum_db: spectrum.values.iter().map(|v| db(v / peak)).collect(),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    signal: &'a SyntheticSignalSpec,
    threshold_db: f64,
    is_distance: &'static str,
    width_reference: &'static str,
    reports: &'a [LeakageReport],
}

pub fn write_report_json<W: Write>(
    reports: &[LeakageReport],
    spec: &SyntheticSignalSpec,
    threshold_db: f64,
    w: W,
) -> Result<()> {
    let doc = ReportDocument {
        signal: spec,
        threshold_db,
        is_distance: "mean over bins of P/Q - ln(P/Q) - 1; P peak-normalized, both floored at 1e-10",
        width_reference: "center-bin value; raw width from first crossing bins, interpolated width linear in dB",
        reports,
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

/// `estimator,is_distance,width_<hz>...` with interpolated widths, then raw
/// widths and clamp flags.
pub fn write_report_csv<W: Write>(reports: &[LeakageReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = reports.first() else {
        return Err(Error::EmptyInput("no reports".into()));
    };
    let mut header = vec!["estimator".to_string(), "is_distance".to_string()];
    let centers: Vec<String> = first.widths.iter().map(|w| format!("{}", w.center_hz)).collect();
    header.extend(centers.iter().map(|c| format!("width_{c}")));
    header.extend(centers.iter().map(|c| format!("width_{c}_raw")));
    header.extend(centers.iter().map(|c| format!("clamped_{c}")));
    out.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.estimator.clone(), r.is_distance.to_string()];
        row.extend(r.widths.iter().map(|w| w.interpolated_hz.to_string()));
        row.extend(r.widths.iter().map(|w| w.raw_hz.to_string()));
        row.extend(r.widths.iter().map(|w| w.clamped.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `bin_hz` followed by one dB column per estimator.
pub fn write_spectra_csv<W: Write>(reports: &[LeakageReport], bin_width: f64, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let bins = reports.first().map_or(0, |r| r.spectrum_db.len());
    if reports.iter().any(|r| r.spectrum_db.len() != bins) {
        return Err(Error::Shape("spectra differ in length".into()));
    }
    let mut header = vec!["bin_hz".to_string()];
    header.extend(reports.iter().map(|r| r.estimator.clone()));
    out.write_record(&header)?;
    for f in 0..bins {
        let mut row = vec![(f as f64 * bin_width).to_string()];
        row.extend(reports.iter().map(|r| r.spectrum_db[f].to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitaper::make_swce_bank;
    use proptest::prelude::*;

    fn spectrum(values: Vec<f64>) -> PowerSpectrum {
        PowerSpectrum {
            values,
            bin_width: 31.25,
        }
    }

    #[test]
    fn signal_examples() {
        let spec = SyntheticSignalSpec {
            bins: vec![16],
            duration: 512,
            ..SyntheticSignalSpec::default()
        };
        let s = synth_signal(&spec).unwrap();
        assert_eq!(s[0], 0.0);
        assert_eq!(s.len(), 512);
        let bank = TaperBank::custom(vec![vec![1.0; 512]], vec![1.0]).unwrap();
        let p = multitaper_power(&Frame::new(s, 16_000).unwrap(), &bank, 512).unwrap();
        let peak = (0..p.len()).max_by(|&a, &b| p.values[a].total_cmp(&p.values[b])).unwrap();
        assert_eq!(peak, 16);
        assert_eq!(p.bin_hz(peak), 500.0);
    }

    #[test]
    fn bins_out_of_range_rejected() {
        for bins in [vec![0], vec![256], vec![16, 300]] {
            let spec = SyntheticSignalSpec {
                bins,
                ..SyntheticSignalSpec::default()
            };
            assert!(matches!(synth_signal(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn ground_truth_examples() {
        let spec = SyntheticSignalSpec::default();
        let t = ground_truth_spectrum(&spec, 1e-10).unwrap();
        assert_eq!(t.len(), 257);
        assert_eq!((t.values[16], t.values[32], t.values[17]), (1.0, 1.0, 1e-10));
        let empty = SyntheticSignalSpec {
            bins: vec![],
            ..spec
        };
        assert!(ground_truth_spectrum(&empty, 1e-10)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 1e-10));
    }

    #[test]
    fn is_distance_examples() {
        let q = spectrum(vec![0.5, 2.0, 1e-3]);
        assert_eq!(itakura_saito(&q, &q).unwrap(), 0.0);
        let p = spectrum(q.values.iter().map(|v| v * std::f64::consts::E).collect());
        assert!((itakura_saito(&p, &q).unwrap() - (std::f64::consts::E - 2.0)).abs() < 1e-12);
        assert!(matches!(
            itakura_saito(&spectrum(vec![0.0, 1.0, 1.0]), &q),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(itakura_saito(&spectrum(vec![1.0]), &q), Err(Error::Shape(_))));
    }

    #[test]
    fn width_with_single_bin_above_threshold() {
        let mut v = vec![1e-12; 257];
        v[16] = 1.0;
        let w = attenuation_width(&spectrum(v), 500.0, 80.0).unwrap();
        assert_eq!((w.n_left, w.n_right), (15, 17));
        assert_eq!(w.raw_hz, 62.5);
        assert!(!w.clamped);
        // crossing reached at the first neighbour; interpolated region is narrower
        assert!(w.interpolated_hz <= w.raw_hz && w.interpolated_hz > 0.0);
    }

    #[test]
    fn interpolation_by_hand() {
        // -40 dB at the neighbours and -120 dB beyond: -80 dB sits halfway
        let mut v = vec![1e-12; 257];
        v[16] = 1.0;
        v[15] = 1e-4;
        v[17] = 1e-4;
        let w = attenuation_width(&spectrum(v), 500.0, 80.0).unwrap();
        assert_eq!(w.raw_hz, 4.0 * 31.25);
        assert!((w.interpolated_hz - 3.0 * 31.25).abs() < 1e-9);
    }

    #[test]
    fn width_clamps_at_edge_and_neighbour() {
        let w = attenuation_width(&spectrum(vec![1.0; 257]), 500.0, 80.0).unwrap();
        assert!(w.clamped);
        assert_eq!((w.n_left, w.n_right), (0, 256));
        let w = attenuation_width_between(&spectrum(vec![1.0; 257]), 500.0, 80.0, &[1000.0]).unwrap();
        assert_eq!((w.n_left, w.n_right), (0, 24));
    }

    #[test]
    fn invalid_center_rejected() {
        let mut v = vec![1.0; 257];
        assert!(matches!(
            attenuation_width(&spectrum(v.clone()), 9000.0, 80.0),
            Err(Error::InvalidCenter(_))
        ));
        v[16] = 0.0;
        assert!(matches!(
            attenuation_width(&spectrum(v), 500.0, 80.0),
            Err(Error::InvalidCenter(_))
        ));
    }

    #[test]
    fn duplicate_estimators_give_identical_rows() {
        let bank = make_swce_bank(4, 512).unwrap();
        let spec = SyntheticSignalSpec::default();
        let reps = leakage_study(
            &[("a".into(), bank.clone()), ("a".into(), bank)],
            &spec,
            80.0,
        )
        .unwrap();
        assert_eq!(reps[0], reps[1]);
        let again = leakage_study(&[("a".into(), make_swce_bank(4, 512).unwrap())], &spec, 80.0).unwrap();
        assert_eq!(again[0], reps[0]);
    }

    #[test]
    fn csv_shapes() {
        let spec = SyntheticSignalSpec::default();
        let reps = leakage_study(
            &[
                ("dft".into(), TaperBank::single_hamming(512).unwrap()),
                ("swce8".into(), make_swce_bank(8, 512).unwrap()),
            ],
            &spec,
            80.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_spectra_csv(&reps, spec.bin_width(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 258);
        assert_eq!(text.lines().next().unwrap(), "bin_hz,dft,swce8");
        let mut buf = Vec::new();
        write_report_csv(&reps, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("estimator,is_distance,width_500,width_1000,"));
        assert_eq!(text.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn is_distance_nonnegative(
            pairs in prop::collection::vec((1e-6f64..1e3, 1e-6f64..1e3), 1..64)
        ) {
            let p = spectrum(pairs.iter().map(|x| x.0).collect());
            let q = spectrum(pairs.iter().map(|x| x.1).collect());
            prop_assert!(itakura_saito(&p, &q).unwrap() >= 0.0);
            prop_assert_eq!(itakura_saito(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn width_monotone_in_threshold(
            values in prop::collection::vec(1e-14f64..1.0, 257),
            center in 1usize..256,
        ) {
            let s = spectrum(values);
            let hz = center as f64 * 31.25;
            let lo = attenuation_width(&s, hz, 60.0).unwrap();
            let hi = attenuation_width(&s, hz, 80.0).unwrap();
            prop_assert!(lo.raw_hz <= hi.raw_hz);
            prop_assert!(lo.raw_hz >= 31.25 || lo.clamped);
        }
    }
}

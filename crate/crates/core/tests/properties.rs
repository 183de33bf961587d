use proptest::prelude::*;

use taperlab::corpus::{synthesize, ToyCorpusSpec};
use taperlab::dsp::full_dft_power;
use taperlab::features::{Dct, MfccStage};
use taperlab::leakage::{leakage_study, SyntheticSignalSpec};
use taperlab::optimizer::{
    adam_step, backward, forward_loss, init_lambda, prepare_corpus, train, Constraint, InitKind,
    PreparedUtterance, ToyClassifier, TrainConfig, TrainState,
};
use taperlab::{
    make_swce_bank, make_window, multitaper_power, real_dft_power, sub_spectra, FeatureConfig,
    FeatureExtractor, Frame, TaperBank, WindowKind,
};

fn frame_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folded_full_spectrum_matches_half(x in frame_strategy(400)) {
        let frame = Frame::new(x, 16_000).unwrap();
        let w = make_window(WindowKind::Hamming, 400).unwrap();
        let half = real_dft_power(&frame, &w, 512).unwrap().values;
        let full = full_dft_power(&frame, &w, 512).unwrap();
        prop_assert_eq!(&half[..], &full[..=256]);
        let scale = max_abs(&full);
        for k in 1..256 {
            prop_assert!((full[k] - full[512 - k]).abs() <= 1e-9 * scale);
        }
        prop_assert!(half.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn parseval(x in frame_strategy(400)) {
        let frame = Frame::new(x.clone(), 16_000).unwrap();
        let w = make_window(WindowKind::Hamming, 400).unwrap();
        let full = full_dft_power(&frame, &w, 512).unwrap();
        let time: f64 = x.iter().zip(w.coefficients()).map(|(a, b)| (a * b).powi(2)).sum();
        let freq = full.iter().sum::<f64>() / 512.0;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
    }

    #[test]
    fn circular_shift_keeps_rectangular_spectrum(x in frame_strategy(512), shift in 0usize..512) {
        let w = make_window(WindowKind::Rectangular, 512).unwrap();
        let mut y = x.clone();
        y.rotate_left(shift);
        let a = real_dft_power(&Frame::new(x, 16_000).unwrap(), &w, 512).unwrap().values;
        let b = real_dft_power(&Frame::new(y, 16_000).unwrap(), &w, 512).unwrap().values;
        let scale = max_abs(&a);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn multitaper_linear_in_weights(
        x in frame_strategy(400),
        raw in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let bank = make_swce_bank(6, 400).unwrap().with_weights(weights.clone()).unwrap();
        let frame = Frame::new(x, 16_000).unwrap();
        let s = multitaper_power(&frame, &bank, 512).unwrap().values;
        let subs = sub_spectra(&frame, &bank, 512).unwrap();
        let scale = max_abs(&s);
        for (f, &sf) in s.iter().enumerate() {
            let manual: f64 = subs.iter().zip(&weights).map(|(p, w)| w * p.values[f]).sum();
            prop_assert!((manual - sf).abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn multitaper_scale_equivariant(x in frame_strategy(400), c in 0.1f64..10.0) {
        let bank = make_swce_bank(8, 400).unwrap();
        let a = multitaper_power(&Frame::new(x.clone(), 16_000).unwrap(), &bank, 512).unwrap().values;
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let b = multitaper_power(&Frame::new(scaled, 16_000).unwrap(), &bank, 512).unwrap().values;
        let scale = max_abs(&b);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((c * c * p - q).abs() <= 1e-9 * scale.max(1e-300));
        }
    }

    #[test]
    fn dct_round_trip(x in prop::collection::vec(-30.0f64..30.0, 40)) {
        let dct = Dct::new(40);
        let mut coeffs = vec![0.0; 40];
        dct.forward(&x, &mut coeffs);
        let mut back = vec![0.0; 40];
        dct.inverse(&coeffs, &mut back);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mfcc_finite_for_any_nonnegative_spectrum(
        spectrum in prop::collection::vec(prop_oneof![Just(0.0f64), 0.0f64..1e6], 257)
    ) {
        let stage = MfccStage::new(&FeatureConfig::default()).unwrap();
        let trace = stage.forward(&spectrum).unwrap();
        prop_assert!(trace.cepstra.iter().all(|c| c.is_finite()));
    }
}

#[test]
fn mfcc_of_zero_spectrum_is_finite() {
    let stage = MfccStage::new(&FeatureConfig::default()).unwrap();
    let trace = stage.forward(&vec![0.0; 257]).unwrap();
    assert!(trace.cepstra.iter().all(|c| c.is_finite()));
}

#[test]
fn mainlobe_widens_with_smoothing() {
    let spec = SyntheticSignalSpec::default();
    let reps = leakage_study(
        &[
            ("dft".into(), TaperBank::single_hamming(512).unwrap()),
            ("swce2".into(), make_swce_bank(2, 512).unwrap()),
            ("swce8".into(), make_swce_bank(8, 512).unwrap()),
        ],
        &spec,
        80.0,
    )
    .unwrap();
    for c in 0..2 {
        let (d, k2, k8) = (&reps[0].widths[c], &reps[1].widths[c], &reps[2].widths[c]);
        assert!(d.raw_hz < k2.raw_hz, "{d:?} vs {k2:?}");
        // both SWCE widths reach the tone-midpoint clamp, so only the weak order is observable
        assert!(k2.raw_hz <= k8.raw_hz, "{k2:?} vs {k8:?}");
    }
}

fn probe() -> (FeatureExtractor, Vec<taperlab::optimizer::LabeledUtterance>) {
    let corpus = synthesize(&ToyCorpusSpec {
        num_speakers: 3,
        utterances_per_speaker: 2,
        duration_s: 0.1,
        seed: 21,
        ..ToyCorpusSpec::default()
    })
    .unwrap();
    let ex = FeatureExtractor::new(FeatureConfig::default(), make_swce_bank(8, 400).unwrap()).unwrap();
    (ex, corpus)
}

#[test]
fn cached_and_recomputed_sub_spectra_agree_bitwise() {
    let (ex, corpus) = probe();
    let cached = prepare_corpus(&corpus, &ex, true).unwrap();
    let fresh = prepare_corpus(&corpus, &ex, false).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
    let clf = ToyClassifier::new(40, 16, 3, 0.2, 30.0, &mut rng);
    let state = TrainState::new(init_lambda(&TrainConfig::default()), clf, 1e-3, Constraint::ReluL1);
    let a: Vec<&PreparedUtterance> = cached.iter().collect();
    let b: Vec<&PreparedUtterance> = fresh.iter().collect();
    let (la, ca) = forward_loss(&a, &state, &ex).unwrap();
    let (lb, cb) = forward_loss(&b, &state, &ex).unwrap();
    assert_eq!(la.to_bits(), lb.to_bits());
    assert_eq!(
        backward(&ca, &a, &state, &ex).unwrap(),
        backward(&cb, &b, &state, &ex).unwrap()
    );

    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let recompute = TrainConfig {
        recompute_spectra: true,
        ..cfg.clone()
    };
    assert_eq!(train(&corpus, &cfg).unwrap().log, train(&corpus, &recompute).unwrap().log);
}

#[test]
fn small_step_does_not_increase_loss() {
    let (ex, corpus) = probe();
    let prepared = prepare_corpus(&corpus, &ex, true).unwrap();
    let batch: Vec<&PreparedUtterance> = prepared.iter().collect();
    let mut ok = 0;
    for seed in 0..100u64 {
        let cfg = TrainConfig {
            init: InitKind::Gaussian,
            seed,
            ..TrainConfig::default()
        };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let clf = ToyClassifier::new(40, 16, 3, 0.2, 30.0, &mut rng);
        let mut state = TrainState::new(init_lambda(&cfg), clf, 1e-4, Constraint::ReluL1);
        state.lambda = state.effective_weights();
        let (before, cache) = forward_loss(&batch, &state, &ex).unwrap();
        let g = backward(&cache, &batch, &state, &ex).unwrap();
        adam_step(&mut state, &g).unwrap();
        let (after, _) = forward_loss(&batch, &state, &ex).unwrap();
        if after <= before {
            ok += 1;
        }
    }
    assert!(ok >= 95, "{ok}/100 steps did not increase the loss");
}

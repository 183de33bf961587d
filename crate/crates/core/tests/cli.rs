use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use taperlab::container::load_binary;
use taperlab::corpus::{synthesize, ToyCorpusSpec};
use taperlab::multitaper::swce_weights;
use taperlab::optimizer::TrainingLog;
use taperlab::wav::{quantize, write_wav};
use taperlab::{FeatureConfig, FeatureExtractor, TaperBank};

fn taperlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taperlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone_wav(dir: &Path, name: &str, seconds: f64) -> (PathBuf, Vec<f64>) {
    let n = (seconds * 16_000.0) as usize;
    let codes: Vec<i16> = (0..n)
        .map(|t| quantize(0.3 * (2.0 * std::f64::consts::PI * 440.0 * t as f64 / 16_000.0).sin()))
        .collect();
    let p = dir.join(name);
    write_wav(&p, &codes, 16_000).unwrap();
    (p, codes.iter().map(|&c| c as f64 / 32768.0).collect())
}

#[test]
fn tapers_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let o = taperlab(&["tapers", "--kind", "swce", "--num-tapers", "8", "--frame-len", "400", "--out", s(&out)]);
    assert!(o.status.success());
    let bank = TaperBank::load(&out).unwrap();
    assert_eq!(bank.num_tapers(), 8);
    assert!((bank.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let o = taperlab(&["tapers", "--num-tapers", "1", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(TaperBank::load(&out).unwrap().weights(), &[1.0]);

    let o = taperlab(&["tapers", "--num-tapers", "250", "--frame-len", "400", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn extract_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (wav, signal) = tone_wav(dir.path(), "a.wav", 1.0);
    let bank_path = dir.path().join("b.json");
    assert!(taperlab(&["tapers", "--num-tapers", "4", "--out", s(&bank_path)]).status.success());
    let out = dir.path().join("a.tplf");
    let o = taperlab(&["extract", "--in", s(&wav), "--tapers", s(&bank_path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = load_binary(&out).unwrap();
    assert_eq!((m.frames, m.dims), (98, 40));
    let ex = FeatureExtractor::new(FeatureConfig::default(), TaperBank::load(&bank_path).unwrap()).unwrap();
    let lib = ex.extract(&signal, "").unwrap();
    assert_eq!(m.data, lib.data);
    assert_eq!(m.config_hash, lib.config_hash);

    // default estimator is the single Hamming window
    let csv_out = dir.path().join("a.csv");
    let o = taperlab(&["extract", "--in", s(&wav), "--out", s(&csv_out), "--format", "csv"]);
    assert!(o.status.success());
    let back = taperlab::container::read_csv(std::fs::File::open(&csv_out).unwrap()).unwrap();
    let ham = FeatureExtractor::new(FeatureConfig::default(), TaperBank::single_hamming(400).unwrap())
        .unwrap()
        .extract(&signal, "")
        .unwrap();
    assert_eq!(back.data, ham.data);
}

#[test]
fn extract_rejects_stereo_and_continues_batch() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    tone_wav(&input, "good.wav", 0.5);
    let stereo = input.join("stereo.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
    for _ in 0..16_000 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();

    let o = taperlab(&["extract", "--in", s(&stereo), "--out", s(&dir.path().join("x.tplf"))]);
    assert_eq!(o.status.code(), Some(3));

    let out = dir.path().join("out");
    let o = taperlab(&["extract", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stereo.wav"));
    let m = load_binary(&out.join("good.tplf")).unwrap();
    assert_eq!(m.frames, 48);
    assert!(!out.join("stereo.tplf").exists());
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (wav, _) = tone_wav(dir.path(), "a.wav", 1.0);
    let run = |threads: &str, out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_taperlab"))
            .args(["extract", "--in", s(&wav), "--out", s(out)])
            .env("TAPERLAB_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (dir.path().join("1.tplf"), dir.path().join("4.tplf"));
    assert!(run("1", &a).status.success());
    assert!(run("4", &b).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(run("zero", &a).status.code(), Some(2));
}

#[test]
fn malformed_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let (wav, _) = tone_wav(dir.path(), "a.wav", 0.1);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"num_filters": "forty"}"#).unwrap();
    let o = taperlab(&["extract", "--in", s(&wav), "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("num_filters"), "{err}");
    assert!(!err.contains("panicked"));
}

#[test]
fn make_corpus_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"num_speakers": 4, "utterances_per_speaker": 10, "duration_s": 0.5, "seed": 3}"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(taperlab(&["make-corpus", "--spec", s(&spec), "--out", s(&a)]).status.success());
    assert!(taperlab(&["make-corpus", "--spec", s(&spec), "--out", s(&b)]).status.success());
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    wavs.sort();
    assert_eq!(wavs.len(), 40);
    for w in &wavs {
        let other = b.join(w.file_name().unwrap());
        assert_eq!(std::fs::read(w).unwrap(), std::fs::read(other).unwrap());
    }
    assert_eq!(
        std::fs::read(a.join("manifest.csv")).unwrap(),
        std::fs::read(b.join("manifest.csv")).unwrap()
    );
    assert_eq!(taperlab::wav::read_wav(&wavs[0]).unwrap().samples.len(), 8000);

    std::fs::write(&spec, r#"{"num_speakers": 1}"#).unwrap();
    let o = taperlab(&["make-corpus", "--spec", s(&spec), "--out", s(&a)]);
    assert_eq!(o.status.code(), Some(2));
}

fn small_corpus(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    std::fs::write(&spec, r#"{"num_speakers": 3, "utterances_per_speaker": 3, "duration_s": 0.3}"#).unwrap();
    let out = dir.join("corpus");
    assert!(taperlab(&["make-corpus", "--spec", s(&spec), "--out", s(&out)]).status.success());
    out.join("manifest.csv")
}

fn train_run(dir: &Path, manifest: &Path, config: &str, tag: &str) -> (Output, PathBuf, PathBuf) {
    let cfg = dir.join(format!("{tag}.json"));
    std::fs::write(&cfg, config).unwrap();
    let bank = dir.join(format!("{tag}_bank.json"));
    let log = dir.join(format!("{tag}.jsonl"));
    let o = taperlab(&[
        "train", "--manifest", s(manifest), "--config", s(&cfg), "--out-bank", s(&bank), "--log", s(&log),
    ]);
    (o, bank, log)
}

#[test]
fn train_no_op_and_init_paths() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let (o, bank, _) = train_run(dir.path(), &manifest, r#"{"lr": 0.0, "epochs": 2}"#, "zero");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let closed = swce_weights(8, 400);
    for (a, b) in TaperBank::load(&bank).unwrap().weights().iter().zip(&closed) {
        assert!((a - b).abs() < 1e-15);
    }
    let (_, _, swce_log) = train_run(dir.path(), &manifest, r#"{"epochs": 2}"#, "swce");
    let (_, _, gauss_log) = train_run(dir.path(), &manifest, r#"{"epochs": 2, "init": "gaussian"}"#, "gauss");
    assert_ne!(std::fs::read(swce_log).unwrap(), std::fs::read(gauss_log).unwrap());
}

#[test]
fn train_default_run_reduces_loss() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("corpus").join("manifest.csv");
    assert!(taperlab(&["make-corpus", "--out", s(manifest.parent().unwrap())]).status.success());
    let (o, _, log) = train_run(dir.path(), &manifest, "{}", "default");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = TrainingLog::from_jsonl(&std::fs::read_to_string(log).unwrap()).unwrap();
    assert_eq!(log.records.len(), 21);
    assert!(log.final_loss().unwrap() < 0.8 * log.initial_loss().unwrap());
}

#[test]
fn train_divergence_and_bad_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let (o, _, _) = train_run(dir.path(), &manifest, r#"{"lr": 1e308, "epochs": 2}"#, "nan");
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    let one = dir.path().join("one.csv");
    std::fs::write(&one, "path,label\ncorpus/spk00_utt000.wav,a\ncorpus/spk00_utt001.wav,a\n").unwrap();
    let (o, _, _) = train_run(dir.path(), &one, "{}", "one");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_checkpoint_written() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_corpus(dir.path());
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"epochs": 1}"#).unwrap();
    let ck = dir.path().join("ck");
    let o = taperlab(&[
        "train", "--manifest", s(&manifest), "--config", s(&cfg),
        "--out-bank", s(&dir.path().join("b.json")), "--log", s(&dir.path().join("l.jsonl")),
        "--checkpoint", s(&ck),
    ]);
    assert!(o.status.success());
    for f in ["bank.json", "projection.tplf", "prototypes.tplf"] {
        assert!(ck.join(f).exists(), "{f}");
    }
}

#[test]
fn leakage_command() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("dft.json");
    assert!(taperlab(&["tapers", "--kind", "hamming", "--frame-len", "512", "--out", s(&bank)]).status.success());
    let report = dir.path().join("r.csv");
    let spectra = dir.path().join("s.csv");
    let list = format!("{},{}", s(&bank), s(&bank));
    let o = taperlab(&["leakage", "--tapers", &list, "--out-report", s(&report), "--out-spectra", s(&spectra)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
    let spectra = std::fs::read_to_string(&spectra).unwrap();
    assert_eq!(spectra.lines().count(), 258);
    assert_eq!(spectra.lines().next().unwrap(), "bin_hz,dft,dft");

    let json = dir.path().join("r.json");
    assert!(taperlab(&["leakage", "--tapers", s(&bank), "--out-report", s(&json), "--out-spectra", s(&dir.path().join("t.csv"))])
        .status
        .success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert!(v["reports"][0]["is_distance"].as_f64().unwrap() > 0.0);

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"kind\": \"swce\"}").unwrap();
    let o = taperlab(&["leakage", "--tapers", s(&broken), "--out-report", s(&report), "--out-spectra", s(&dir.path().join("u.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_matches_in_memory_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ToyCorpusSpec {
        num_speakers: 2,
        utterances_per_speaker: 2,
        duration_s: 0.2,
        ..ToyCorpusSpec::default()
    };
    let manifest = taperlab::corpus::write_corpus(&spec, dir.path()).unwrap();
    let disk = taperlab::corpus::read_manifest(&manifest).unwrap();
    let mem = synthesize(&spec).unwrap();
    assert_eq!(disk.len(), mem.len());
    assert!(disk.iter().zip(&mem).all(|(a, b)| a.signal == b.signal && a.label == b.label));
}

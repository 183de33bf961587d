//! Command-line front end. Exit codes: 0 ok, 2 configuration, 3 input,
//! 4 training divergence, 1 anything else.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use rayon::prelude::*;
use serde::de::DeserializeOwned;

use crate::container;
use crate::corpus::{read_manifest, write_corpus, ToyCorpusSpec};
use crate::features::{FeatureConfig, FeatureExtractor, FeatureMatrix};
use crate::leakage::{
    leakage_study, write_report_csv, write_report_json, write_spectra_csv, SyntheticSignalSpec,
    DEFAULT_THRESHOLD_DB,
};
use crate::multitaper::{make_swce_bank, TaperBank};
use crate::optimizer::{train, TrainConfig};
use crate::wav::read_wav;
use crate::{Error, Result};

pub const THREADS_ENV: &str = "TAPERLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "taperlab", version, about = "Multi-taper MFCC features and taper-weight learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaperKind {
    Swce,
    Hamming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Bin,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a taper bank as JSON.
    Tapers {
        #[arg(long, value_enum, default_value = "swce")]
        kind: TaperKind,
        #[arg(long, default_value_t = 8)]
        num_tapers: usize,
        #[arg(long = "frame-len", default_value_t = 400)]
        frame_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract MFCCs from a WAV file or every WAV in a directory.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// Taper bank JSON; the config's estimator when omitted.
        #[arg(long)]
        tapers: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file for a single WAV, output directory otherwise.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "bin")]
        format: OutputFormat,
    },
    /// Synthesize the toy speaker corpus.
    MakeCorpus {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Jointly train taper weights and the toy classifier.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_bank: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Directory for the classifier parameters and bank.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Leakage study on synthetic on-bin tones.
    Leakage {
        /// Comma-separated taper bank files.
        #[arg(long, value_delimiter = ',', required = true)]
        tapers: Vec<PathBuf>,
        /// `.csv` writes the table, anything else JSON.
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        out_spectra: PathBuf,
        /// Synthetic signal spec JSON; tones at 500 Hz and 1 kHz when omitted.
        #[arg(long)]
        signal: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB)]
        threshold_db: f64,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::DegenerateTaper(_)
        | Error::InvalidLength(_)
        | Error::Constraint(_)
        | Error::Shape(_)
        | Error::Json(_) => 2,
        Error::UnsupportedAudio { .. }
        | Error::Wav(_)
        | Error::Io(_)
        | Error::Format(_)
        | Error::Csv(_)
        | Error::EmptyInput(_) => 3,
        Error::Diverged { .. } => 4,
        Error::Numeric(_) | Error::InvalidCenter(_) | Error::StaleCache(_) => 1,
    }
}

/// Parses a JSON file; errors name the file and the offending field.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Config(format!("{}: {field}: {}", path.display(), e.into_inner()))
    })
}

fn load_bank(path: &Path) -> Result<TaperBank> {
    TaperBank::load(path).map_err(|e| match e {
        Error::Io(_) | Error::Json(_) => Error::Config(format!("{}: {e}", path.display())),
        other => other,
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}: expected a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("{THREADS_ENV}: {e}")))
}

fn write_matrix(m: &FeatureMatrix, path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Bin => container::save_binary(m, path),
        OutputFormat::Csv => container::write_csv(m, BufWriter::new(File::create(path)?)),
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn extract_file(ex: &FeatureExtractor, wav: &Path, out: &Path, format: OutputFormat) -> Result<()> {
    let clip = read_wav(wav)?;
    let m = ex.extract(&clip.samples, &wav.display().to_string())?;
    write_matrix(&m, out, format)
}

fn cmd_extract(
    input: &Path,
    tapers: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    format: OutputFormat,
) -> Result<()> {
    let config: FeatureConfig = match config {
        Some(p) => load_json(p)?,
        None => FeatureConfig::default(),
    };
    config.validate()?;
    let extractor = match tapers {
        Some(p) => FeatureExtractor::new(config, load_bank(p)?)?,
        None => FeatureExtractor::from_config(config)?,
    };
    let pool = thread_pool()?;
    if !input.is_dir() {
        return pool.install(|| extract_file(&extractor, input, out, format));
    }
    std::fs::create_dir_all(out)?;
    let ext = match format {
        OutputFormat::Bin => "tplf",
        OutputFormat::Csv => "csv",
    };
    let files = wav_files(input)?;
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no .wav files in {}", input.display())));
    }
    let results: Vec<(PathBuf, Result<()>)> = pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let stem = f.file_stem().unwrap_or_default();
                let target = out.join(Path::new(stem).with_extension(ext));
                (f.clone(), extract_file(&extractor, f, &target, format))
            })
            .collect()
    });
    let mut first_error = None;
    for (f, r) in results {
        if let Err(e) = r {
            error!("{}: {e}", f.display());
            first_error.get_or_insert(e);
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_train(
    manifest: &Path,
    config: Option<&Path>,
    out_bank: &Path,
    log_path: &Path,
    checkpoint: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let mut config: TrainConfig = match config {
        Some(p) => load_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let corpus = read_manifest(manifest)?;
    let outcome = train(&corpus, &config)?;
    outcome.bank.save(out_bank)?;
    outcome.log.write_jsonl(BufWriter::new(File::create(log_path)?))?;
    if let Some(dir) = checkpoint {
        let hash = config.features.hash_with(&outcome.bank);
        outcome.save_checkpoint(dir, hash)?;
    }
    if let (Some(a), Some(b)) = (outcome.log.initial_loss(), outcome.log.final_loss()) {
        info!("loss {a:.6} -> {b:.6}");
    }
    Ok(())
}

fn cmd_leakage(
    tapers: &[PathBuf],
    out_report: &Path,
    out_spectra: &Path,
    signal: Option<&Path>,
    threshold_db: f64,
) -> Result<()> {
    let spec: SyntheticSignalSpec = match signal {
        Some(p) => load_json(p)?,
        None => SyntheticSignalSpec::default(),
    };
    let estimators = tapers
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok((name, load_bank(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let reports = leakage_study(&estimators, &spec, threshold_db)?;
    let report_file = BufWriter::new(File::create(out_report)?);
    if out_report
        .extension()
        .is_some_and(|x| x.eq_ignore_ascii_case("csv"))
    {
        write_report_csv(&reports, report_file)?;
    } else {
        write_report_json(&reports, &spec, threshold_db, report_file)?;
    }
    write_spectra_csv(&reports, spec.bin_width(), BufWriter::new(File::create(out_spectra)?))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tapers {
            kind,
            num_tapers,
            frame_len,
            out,
        } => {
            let bank = match kind {
                TaperKind::Swce => make_swce_bank(num_tapers, frame_len)?,
                TaperKind::Hamming => TaperBank::single_hamming(frame_len)?,
            };
            bank.save(&out)
        }
        Command::Extract {
            input,
            tapers,
            config,
            out,
            format,
        } => cmd_extract(&input, tapers.as_deref(), config.as_deref(), &out, format),
        Command::MakeCorpus { spec, out, seed } => {
            let mut spec: ToyCorpusSpec = match spec {
                Some(p) => load_json(&p)?,
                None => ToyCorpusSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let manifest = write_corpus(&spec, &out)?;
            info!("wrote {}", manifest.display());
            Ok(())
        }
        Command::Train {
            manifest,
            config,
            out_bank,
            log,
            checkpoint,
            seed,
        } => cmd_train(
            &manifest,
            config.as_deref(),
            &out_bank,
            &log,
            checkpoint.as_deref(),
            seed,
        ),
        Command::Leakage {
            tapers,
            out_report,
            out_spectra,
            signal,
            threshold_db,
        } => cmd_leakage(&tapers, &out_report, &out_spectra, signal.as_deref(), threshold_db),
    }
}

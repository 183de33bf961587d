//! Multi-taper power spectrum estimation, MFCC extraction and joint
//! gradient-based learning of taper weights.
//!
//! The pipeline is `frame -> multi-taper power spectrum -> mel -> log -> DCT`.
//! Because the multi-taper spectrum is linear in the taper weights, the
//! per-taper sub-spectra are cached and the weights can be learned jointly
//! with a small angular-margin classifier (see [`optimizer`]).

pub mod cli;
pub mod container;
pub mod corpus;
pub mod dsp;
mod error;
pub mod features;
pub mod leakage;
pub mod multitaper;
pub mod optimizer;
pub mod wav;

pub use error::{Error, Result};

pub use dsp::{frame_signal, make_window, real_dft_power, Frame, PowerSpectrum, Window, WindowKind};
pub use features::{extract_utterance, mfcc, FeatureConfig, FeatureExtractor, FeatureMatrix, MelFilterbank};
pub use leakage::{attenuation_width, itakura_saito, leakage_study, LeakageReport, SyntheticSignalSpec};
pub use multitaper::{make_swce_bank, multitaper_power, sub_spectra, BankKind, TaperBank};
pub use optimizer::{project_weights, train, Constraint, InitKind, TrainConfig, TrainState, TrainingLog};

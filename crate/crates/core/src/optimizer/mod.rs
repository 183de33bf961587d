//! Joint learning of taper weights and a toy angular-margin classifier.
//!
//! Per utterance the forward path is: multi-taper spectrum per frame
//! (`sum_j lambda_hat(j) P_j`), MFCC per frame, temporal mean pooling,
//! linear projection, length normalization and AAM-softmax. The backward
//! path is written out by hand; `d S / d lambda_hat(j) = P_j`.

pub mod adam;
pub mod classifier;
mod train;

use serde::{Deserialize, Serialize};

use crate::features::FeatureConfig;
use crate::multitaper::swce_weights;
use crate::{Error, Result};

pub use adam::AdamMoments;
pub use classifier::{AamTrace, ClassifierGrad, ToyClassifier};
pub use train::{
    adam_step, backward, forward_loss, prepare_corpus, train, EpochRecord, ForwardCache,
    Gradients, LabeledUtterance, PreparedUtterance, TrainOutcome, TrainState, TrainingLog,
};

/// Floor applied after the ReLU inside [`project_weights`].
pub const PROJECTION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    Swce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    None,
    ReluL1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub init: InitKind,
    pub constraint: Constraint,
    pub num_tapers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// radians
    pub margin: f64,
    pub scale: f64,
    pub embed_dim: usize,
    /// Inferred from the corpus when absent.
    pub num_classes: Option<usize>,
    /// Recompute sub-spectra from the raw frames every step instead of caching.
    pub recompute_spectra: bool,
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            init: InitKind::Swce,
            constraint: Constraint::ReluL1,
            num_tapers: 8,
            lr: 1e-3,
            batch_size: 16,
            epochs: 20,
            seed: 0,
            margin: 0.2,
            scale: 30.0,
            embed_dim: 32,
            num_classes: None,
            recompute_spectra: false,
            features: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            // lr = 0 is allowed for no-op runs
            return fail("lr", format!("must be finite and >= 0, got {}", self.lr));
        }
        if self.num_tapers == 0 {
            return fail("num_tapers", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1".into());
        }
        if self.embed_dim == 0 {
            return fail("embed_dim", "must be at least 1".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return fail("scale", format!("must be > 0, got {}", self.scale));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.margin) {
            return fail("margin", format!("must be in [0, pi/2), got {}", self.margin));
        }
        if let Some(c) = self.num_classes {
            if c < 2 {
                return fail("num_classes", format!("need at least 2, got {c}"));
            }
        }
        self.features.validate()
    }
}

/// Initial unconstrained weights: seeded standard-normal draws, or the SWCE closed form.
pub fn init_lambda(config: &TrainConfig) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    match config.init {
        InitKind::Swce => swce_weights(config.num_tapers, config.features.frame_length),
        InitKind::Gaussian => {
            // separate stream from the classifier initialization
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0x6c61_6d62_6461);
            (0..config.num_tapers)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        }
    }
}

/// Active set of the projection: indices left above the floor and the
/// scale applied to them.
fn projection_support(lambda: &[f64]) -> (Vec<bool>, f64) {
    let k = lambda.len();
    let relu: Vec<f64> = lambda.iter().map(|&x| x.max(0.0)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| relu[b].total_cmp(&relu[a]));
    let mut active = vec![false; k];
    let mut best = (0usize, 0.0);
    let mut partial = 0.0;
    for (m, &i) in order.iter().enumerate() {
        partial += relu[i];
        if partial <= 0.0 {
            break;
        }
        let scale = (1.0 - (k - m - 1) as f64 * PROJECTION_FLOOR) / partial;
        if scale * relu[i] >= PROJECTION_FLOOR {
            best = (m + 1, scale);
        }
    }
    for &i in &order[..best.0] {
        active[i] = true;
    }
    (active, best.1)
}

/// ReLU, then l1 normalization with a floor of [`PROJECTION_FLOOR`] on every
/// output weight. The floor is applied by water-filling, so the output is
/// strictly positive, sums to one, and the map is idempotent.
pub fn project_weights(lambda: &[f64]) -> Vec<f64> {
    let k = lambda.len();
    let sum: f64 = lambda.iter().sum();
    if lambda.iter().all(|&x| x >= PROJECTION_FLOOR)
        && (sum - 1.0).abs() <= 2.0 * k as f64 * f64::EPSILON
    {
        // already on the floored simplex up to rounding
        return lambda.to_vec();
    }
    let (active, scale) = projection_support(lambda);
    if !active.iter().any(|&a| a) {
        return vec![1.0 / k as f64; k];
    }
    lambda
        .iter()
        .zip(&active)
        .map(|(&x, &a)| if a { scale * x } else { PROJECTION_FLOOR })
        .collect()
}

/// Vector-Jacobian product of [`project_weights`] at `lambda`. Floored and
/// clipped coordinates receive zero gradient.
pub fn project_weights_backward(lambda: &[f64], grad_projected: &[f64]) -> Vec<f64> {
    let (active, scale) = projection_support(lambda);
    let inner: f64 = lambda
        .iter()
        .zip(grad_projected)
        .zip(&active)
        .filter(|(_, &a)| a)
        .map(|((x, g), _)| g * x)
        .sum::<f64>()
        * scale;
    let mass: f64 = lambda
        .iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .map(|(x, _)| x * scale)
        .sum();
    lambda
        .iter()
        .zip(grad_projected)
        .zip(&active)
        .map(|((_, g), &a)| {
            if a {
                scale * (g - inner / mass)
            } else {
                0.0
            }
        })
        .collect()
}

/// Weights that enter the spectrum for a given constraint mode.
pub fn effective_weights(lambda: &[f64], constraint: Constraint) -> Vec<f64> {
    match constraint {
        Constraint::ReluL1 => project_weights(lambda),
        Constraint::None => lambda.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub top2_mass: f64,
    pub entropy: f64,
}

/// Sum of the two largest weights and the Shannon entropy (nats) of a weight distribution.
pub fn concentration(weights: &[f64]) -> Concentration {
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top2_mass = sorted.iter().take(2).sum();
    let entropy = -weights
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    Concentration { top2_mass, entropy }
}

/// Concentration of the projected weights for every logged epoch.
pub fn weight_concentration(log: &TrainingLog) -> Result<Vec<Concentration>> {
    if log.records.is_empty() {
        return Err(Error::EmptyInput("training log has no epochs".into()));
    }
    Ok(log.records.iter().map(|r| concentration(&r.lambda)).collect())
}

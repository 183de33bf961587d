use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamMoments;
use super::classifier::{AamTrace, ClassifierGrad, ToyClassifier};
use super::{
    concentration, effective_weights, init_lambda, project_weights, project_weights_backward,
    Constraint, TrainConfig,
};
use crate::container;
use crate::features::{FeatureExtractor, FeatureMatrix, MfccTrace};
use crate::multitaper::{combine_sub_spectra_into, make_swce_bank, TaperBank};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledUtterance {
    pub id: String,
    pub label: usize,
    pub signal: Vec<f64>,
}

/// An utterance ready for training. Sub-spectra are cached unless the
/// corpus was prepared in recompute mode, in which case the raw signal is kept.
#[derive(Debug, Clone)]
pub struct PreparedUtterance {
    pub id: String,
    pub label: usize,
    cached: Option<Vec<Vec<f64>>>,
    signal: Vec<f64>,
}

impl PreparedUtterance {
    fn sub_spectra<'a>(
        &'a self,
        extractor: &FeatureExtractor,
    ) -> Result<std::borrow::Cow<'a, [Vec<f64>]>> {
        match &self.cached {
            Some(subs) => Ok(std::borrow::Cow::Borrowed(subs)),
            None => Ok(std::borrow::Cow::Owned(
                extractor.utterance_sub_spectra(&self.signal)?,
            )),
        }
    }
}

/// Computes (or defers) the sub-spectra of every utterance. Utterances
/// shorter than one frame are skipped with a warning.
pub fn prepare_corpus(
    corpus: &[LabeledUtterance],
    extractor: &FeatureExtractor,
    cache: bool,
) -> Result<Vec<PreparedUtterance>> {
    let frame_length = extractor.config().frame_length;
    let mut out = Vec::with_capacity(corpus.len());
    for u in corpus {
        if u.signal.len() < frame_length {
            warn!(
                "skipping utterance {}: {} samples is shorter than one frame",
                u.id,
                u.signal.len()
            );
            continue;
        }
        let cached = if cache {
            Some(extractor.utterance_sub_spectra(&u.signal)?)
        } else {
            None
        };
        out.push(PreparedUtterance {
            id: u.id.clone(),
            label: u.label,
            cached,
            signal: if cache { Vec::new() } else { u.signal.clone() },
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Learnable parameters, optimizer moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// unconstrained taper weights
    pub lambda: Vec<f64>,
    pub classifier: ToyClassifier,
    pub adam_lambda: AdamMoments,
    pub adam_projection: AdamMoments,
    pub adam_prototypes: AdamMoments,
    pub step: usize,
    pub lr: f64,
    pub constraint: Constraint,
}

impl TrainState {
    pub fn new(lambda: Vec<f64>, classifier: ToyClassifier, lr: f64, constraint: Constraint) -> Self {
        Self {
            adam_lambda: AdamMoments::zeros(lambda.len()),
            adam_projection: AdamMoments::zeros(classifier.projection.len()),
            adam_prototypes: AdamMoments::zeros(classifier.prototypes.len()),
            lambda,
            classifier,
            step: 0,
            lr,
            constraint,
        }
    }

    /// Weights used in the spectrum at the current step.
    pub fn effective_weights(&self) -> Vec<f64> {
        effective_weights(&self.lambda, self.constraint)
    }

    /// Weights after the export projection, always strictly positive and unit-sum.
    pub fn exported_weights(&self) -> Vec<f64> {
        project_weights(&self.lambda)
    }
}

#[derive(Debug, Clone)]
struct UtteranceCache {
    frames: Vec<MfccTrace>,
    aam: AamTrace,
}

/// Forward values of one batch, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    step: usize,
    ids: Vec<String>,
    weights: Vec<f64>,
    utterances: Vec<UtteranceCache>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// with respect to the unconstrained weights
    pub lambda: Vec<f64>,
    /// with respect to the weights that enter the spectrum
    pub lambda_effective: Vec<f64>,
    pub classifier: ClassifierGrad,
}

fn utterance_forward(
    utt: &PreparedUtterance,
    weights: &[f64],
    classifier: &ToyClassifier,
    extractor: &FeatureExtractor,
) -> Result<UtteranceCache> {
    let subs = utt.sub_spectra(extractor)?;
    let stage = extractor.stage();
    let mut spectrum = vec![0.0; extractor.num_bins()];
    let mut pooled = vec![0.0; stage.num_ceps];
    let mut frames = Vec::with_capacity(subs.len());
    for frame_subs in subs.iter() {
        combine_sub_spectra_into(frame_subs, weights, &mut spectrum);
        let trace = stage.forward(&spectrum)?;
        for (p, c) in pooled.iter_mut().zip(&trace.cepstra) {
            *p += c;
        }
        frames.push(trace);
    }
    let t = frames.len() as f64;
    pooled.iter_mut().for_each(|p| *p /= t);
    let aam = classifier.forward(&pooled, utt.label);
    Ok(UtteranceCache { frames, aam })
}

/// Mean AAM-softmax loss over `batch`, processed in utterance-id order.
pub fn forward_loss(
    batch: &[&PreparedUtterance],
    state: &TrainState,
    extractor: &FeatureExtractor,
) -> Result<(f64, ForwardCache)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch has no utterances".into()));
    }
    let mut ordered: Vec<&PreparedUtterance> = batch.to_vec();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let weights = state.effective_weights();
    let utterances: Vec<UtteranceCache> = ordered
        .par_iter()
        .map(|u| utterance_forward(u, &weights, &state.classifier, extractor))
        .collect::<Result<_>>()?;
    let loss = utterances.iter().map(|u| u.aam.loss).sum::<f64>() / utterances.len() as f64;
    Ok((
        loss,
        ForwardCache {
            step: state.step,
            ids: ordered.iter().map(|u| u.id.clone()).collect(),
            weights,
            utterances,
            loss,
        },
    ))
}

/// Analytic gradients of the batch loss. `batch` must be the one passed to
/// [`forward_loss`] for the same step.
pub fn backward(
    cache: &ForwardCache,
    batch: &[&PreparedUtterance],
    state: &TrainState,
    extractor: &FeatureExtractor,
) -> Result<Gradients> {
    let mut ordered: Vec<&PreparedUtterance> = batch.to_vec();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    if cache.step != state.step
        || cache.weights != state.effective_weights()
        || ordered.len() != cache.ids.len()
        || ordered.iter().zip(&cache.ids).any(|(u, id)| &u.id != id)
    {
        return Err(Error::StaleCache(format!(
            "cache from step {} used at step {}",
            cache.step, state.step
        )));
    }
    let k = cache.weights.len();
    let bins = extractor.num_bins();
    let inv_batch = 1.0 / ordered.len() as f64;
    let stage = extractor.stage();

    let per_utt: Vec<(Vec<f64>, ClassifierGrad)> = ordered
        .par_iter()
        .zip(cache.utterances.par_iter())
        .map(|(utt, uc)| -> Result<_> {
            let mut cgrad = ClassifierGrad::zeros(&state.classifier);
            let d_pooled = state.classifier.backward(&uc.aam, inv_batch, &mut cgrad);
            let t = uc.frames.len() as f64;
            let d_ceps: Vec<f64> = d_pooled.iter().map(|g| g / t).collect();
            let subs = utt.sub_spectra(extractor)?;
            let mut d_weights = vec![0.0; k];
            let mut d_spec = vec![0.0; bins];
            for (trace, frame_subs) in uc.frames.iter().zip(subs.iter()) {
                d_spec.fill(0.0);
                stage.backward_acc(trace, &d_ceps, &mut d_spec);
                for (dw, p) in d_weights.iter_mut().zip(frame_subs.chunks(bins)) {
                    *dw += d_spec.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Ok((d_weights, cgrad))
        })
        .collect::<Result<_>>()?;

    let mut lambda_effective = vec![0.0; k];
    let mut classifier = ClassifierGrad::zeros(&state.classifier);
    for (dw, cg) in &per_utt {
        for (a, b) in lambda_effective.iter_mut().zip(dw) {
            *a += b;
        }
        classifier.add(cg);
    }
    let lambda = match state.constraint {
        Constraint::ReluL1 => project_weights_backward(&state.lambda, &lambda_effective),
        Constraint::None => lambda_effective.clone(),
    };
    Ok(Gradients {
        lambda,
        lambda_effective,
        classifier,
    })
}

/// One Adam update of every parameter, followed by prototype re-normalization
/// and, under the ReLU + l1 constraint, projection of the taper weights.
pub fn adam_step(state: &mut TrainState, grads: &Gradients) -> Result<()> {
    if grads.lambda.len() != state.lambda.len()
        || grads.classifier.projection.len() != state.classifier.projection.len()
        || grads.classifier.prototypes.len() != state.classifier.prototypes.len()
    {
        return Err(Error::Shape("gradient shapes do not match parameters".into()));
    }
    state.step += 1;
    let (lr, step) = (state.lr, state.step);
    state
        .adam_lambda
        .update(&mut state.lambda, &grads.lambda, lr, step);
    state.adam_projection.update(
        &mut state.classifier.projection,
        &grads.classifier.projection,
        lr,
        step,
    );
    state.adam_prototypes.update(
        &mut state.classifier.prototypes,
        &grads.classifier.prototypes,
        lr,
        step,
    );
    state.classifier.renormalize_prototypes();
    if state.constraint == Constraint::ReluL1 {
        state.lambda = project_weights(&state.lambda);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// exported (projected) weights
    pub lambda: Vec<f64>,
    pub top2_mass: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bank: TaperBank,
    pub log: TrainingLog,
    pub state: TrainState,
}

impl TrainOutcome {
    /// Writes `bank.json`, `projection.tplf` and `prototypes.tplf` into `dir`.
    pub fn save_checkpoint(&self, dir: &Path, config_hash: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.bank.save(&dir.join("bank.json"))?;
        let c = &self.state.classifier;
        let as_matrix = |data: &[f64], rows: usize, cols: usize, name: &str| FeatureMatrix {
            frames: rows,
            dims: cols,
            data: data.to_vec(),
            source_id: name.to_string(),
            config_hash,
        };
        container::save_binary(
            &as_matrix(&c.projection, c.embed_dim, c.input_dim, "projection"),
            &dir.join("projection.tplf"),
        )?;
        container::save_binary(
            &as_matrix(&c.prototypes, c.num_classes, c.embed_dim, "prototypes"),
            &dir.join("prototypes.tplf"),
        )?;
        Ok(())
    }
}

fn check_corpus(corpus: &[LabeledUtterance], num_classes: Option<usize>) -> Result<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for u in corpus {
        *counts.entry(u.label).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, corpus has {}",
            counts.len()
        )));
    }
    if let Some((label, n)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(Error::Config(format!(
            "class {label} has {n} utterance(s); need at least 2 per class"
        )));
    }
    let needed = counts.keys().next_back().map_or(0, |m| m + 1);
    match num_classes {
        Some(c) if c < needed => Err(Error::Config(format!(
            "num_classes: {c} is smaller than the largest label + 1 = {needed}"
        ))),
        Some(c) => Ok(c),
        None => Ok(needed),
    }
}

fn record(epoch: usize, loss: f64, state: &TrainState) -> EpochRecord {
    let lambda = state.exported_weights();
    let c = concentration(&lambda);
    EpochRecord {
        epoch,
        loss,
        lambda,
        top2_mass: c.top2_mass,
        entropy: c.entropy,
    }
}

/// Jointly trains taper weights and the toy classifier. Epoch 0 of the log is
/// the full-corpus loss before any update; epoch `e` is measured after the
/// `e`-th pass.
pub fn train(corpus: &[LabeledUtterance], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let num_classes = check_corpus(corpus, config.num_classes)?;
    let tapers = make_swce_bank(config.num_tapers, config.features.frame_length)?;
    let extractor = FeatureExtractor::new(config.features.clone(), tapers.clone())?;
    let prepared = prepare_corpus(corpus, &extractor, !config.recompute_spectra)?;
    if prepared.is_empty() {
        return Err(Error::EmptyInput("no utterance spans a full frame".into()));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let classifier = ToyClassifier::new(
        config.features.num_ceps,
        config.embed_dim,
        num_classes,
        config.margin,
        config.scale,
        &mut rng,
    );
    let mut state = TrainState::new(init_lambda(config), classifier, config.lr, config.constraint);

    let everything: Vec<&PreparedUtterance> = prepared.iter().collect();
    let evaluate = |state: &TrainState, epoch: usize| -> Result<f64> {
        let (loss, _) = forward_loss(&everything, state, &extractor)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: state.step,
                detail: format!("corpus loss is {loss}"),
            });
        }
        Ok(loss)
    };

    let mut log = TrainingLog::default();
    log.records.push(record(0, evaluate(&state, 0)?, &state));

    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedUtterance> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (loss, cache) = forward_loss(&batch, &state, &extractor)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: state.step,
                    detail: format!("batch loss is {loss}"),
                });
            }
            let grads = backward(&cache, &batch, &state, &extractor)?;
            if grads.lambda.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step: state.step,
                    detail: "non-finite taper-weight gradient".into(),
                });
            }
            adam_step(&mut state, &grads)?;
        }
        log.records.push(record(epoch, evaluate(&state, epoch)?, &state));
    }

    let bank = tapers.with_weights(state.exported_weights())?;
    Ok(TrainOutcome { bank, log, state })
}

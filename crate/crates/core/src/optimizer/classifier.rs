use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Linear projection, length normalization and cosine scores against unit
/// class prototypes, trained with an additive angular margin softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    /// row-major `embed_dim x input_dim`
    pub projection: Vec<f64>,
    /// row-major `num_classes x embed_dim`, unit rows
    pub prototypes: Vec<f64>,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
    /// radians
    pub margin: f64,
    pub scale: f64,
}

/// Gradient buffers matching [`ToyClassifier`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrad {
    pub projection: Vec<f64>,
    pub prototypes: Vec<f64>,
}

impl ClassifierGrad {
    pub fn zeros(c: &ToyClassifier) -> Self {
        Self {
            projection: vec![0.0; c.projection.len()],
            prototypes: vec![0.0; c.prototypes.len()],
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.projection.iter_mut().for_each(|v| *v *= k);
        self.prototypes.iter_mut().for_each(|v| *v *= k);
    }

    pub fn add(&mut self, other: &ClassifierGrad) {
        for (a, b) in self.projection.iter_mut().zip(&other.projection) {
            *a += b;
        }
        for (a, b) in self.prototypes.iter_mut().zip(&other.prototypes) {
            *a += b;
        }
    }
}

/// Forward state of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AamTrace {
    pub input: Vec<f64>,
    pub embedding: Vec<f64>,
    pub norm: f64,
    pub cosines: Vec<f64>,
    pub probs: Vec<f64>,
    pub label: usize,
    pub loss: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl ToyClassifier {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        embed_dim: usize,
        num_classes: usize,
        margin: f64,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let std = (1.0 / input_dim as f64).sqrt();
        let projection = (0..embed_dim * input_dim)
            .map(|_| std * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        let mut prototypes: Vec<f64> = (0..num_classes * embed_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        for row in prototypes.chunks_mut(embed_dim) {
            normalize(row);
        }
        Self {
            projection,
            prototypes,
            input_dim,
            embed_dim,
            num_classes,
            margin,
            scale,
        }
    }

    pub fn prototype(&self, c: usize) -> &[f64] {
        &self.prototypes[c * self.embed_dim..(c + 1) * self.embed_dim]
    }

    pub fn renormalize_prototypes(&mut self) {
        for row in self.prototypes.chunks_mut(self.embed_dim) {
            normalize(row);
        }
    }

    /// Unit-length embedding of `input` and the pre-normalization norm.
    pub fn embed(&self, input: &[f64]) -> (Vec<f64>, f64) {
        let mut z: Vec<f64> = self
            .projection
            .chunks(self.input_dim)
            .map(|row| dot(row, input))
            .collect();
        let norm = dot(&z, &z).sqrt();
        z.iter_mut().for_each(|v| *v /= norm);
        (z, norm)
    }

    /// Target logit `s cos(theta + m)` and its derivative with respect to `cos theta`.
    fn margin_logit(&self, cos: f64) -> (f64, f64) {
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let (sm, cm) = self.margin.sin_cos();
        let value = self.scale * (cos * cm - sin * sm);
        let deriv = self.scale * (cm + sm * cos / sin.max(1e-12));
        (value, deriv)
    }

    pub fn forward(&self, input: &[f64], label: usize) -> AamTrace {
        let (embedding, norm) = self.embed(input);
        let cosines: Vec<f64> = (0..self.num_classes)
            .map(|c| dot(&embedding, self.prototype(c)).clamp(-1.0, 1.0))
            .collect();
        let logits: Vec<f64> = cosines
            .iter()
            .enumerate()
            .map(|(c, &cos)| {
                if c == label {
                    self.margin_logit(cos).0
                } else {
                    self.scale * cos
                }
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let loss = total.ln() + max - logits[label];
        AamTrace {
            input: input.to_vec(),
            embedding,
            norm,
            cosines,
            probs,
            label,
            loss,
        }
    }

    /// Accumulates `weight * d loss` into `grad` and returns `weight * d loss / d input`.
    pub fn backward(&self, trace: &AamTrace, weight: f64, grad: &mut ClassifierGrad) -> Vec<f64> {
        let d = self.embed_dim;
        let mut d_embed = vec![0.0; d];
        for c in 0..self.num_classes {
            let onehot = if c == trace.label { 1.0 } else { 0.0 };
            let d_logit = weight * (trace.probs[c] - onehot);
            let d_cos = if c == trace.label {
                d_logit * self.margin_logit(trace.cosines[c]).1
            } else {
                d_logit * self.scale
            };
            let proto = self.prototype(c);
            for k in 0..d {
                d_embed[k] += d_cos * proto[k];
                grad.prototypes[c * d + k] += d_cos * trace.embedding[k];
            }
        }
        // through z / |z|
        let radial = dot(&d_embed, &trace.embedding);
        let d_z: Vec<f64> = d_embed
            .iter()
            .zip(&trace.embedding)
            .map(|(g, e)| (g - e * radial) / trace.norm)
            .collect();
        let mut d_input = vec![0.0; self.input_dim];
        for (row, dz) in d_z.iter().enumerate() {
            let w = &self.projection[row * self.input_dim..(row + 1) * self.input_dim];
            let gw = &mut grad.projection[row * self.input_dim..(row + 1) * self.input_dim];
            for i in 0..self.input_dim {
                gw[i] += dz * trace.input[i];
                d_input[i] += dz * w[i];
            }
        }
        d_input
    }
}

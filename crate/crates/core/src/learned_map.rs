//! Supervised soft cluster assignment.
//!
//! A small feed-forward network maps an embedding to a distribution over the
//! K clusters; the routing estimate is that distribution dotted with the
//! LLM's per-cluster errors. The network is trained by log loss against the
//! training LLMs' labels with the per-cluster errors held fixed.
//!
//! Inputs are standardized per feature with statistics frozen from the
//! training set. `TwoHidden` inserts two ReLU layers of width
//! [`HIDDEN_WIDTH`] before the softmax layer.

use serde::{Deserialize, Serialize};

use crate::datamodel::LabelMatrix;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, LlmFeature};
use crate::rng::{self, unit_f64};
use crate::routing::{clamp_unit, Descriptor, GammaEstimator, PoolEntry};

pub const HIDDEN_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    LinearSoftmax,
    TwoHidden,
}

/// Fully connected layer; `weights` is row-major `rows x cols` (outputs x inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.cols)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Per-feature mean and population standard deviation; constant
    /// features keep scale 1.
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Network parameters. Serializes as a JSON document with the arch tag,
/// dimensions, frozen standardization vectors, and row-major layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub arch: Arch,
    pub input_dim: usize,
    pub k: usize,
    pub seed: u64,
    pub standardize: Standardizer,
    pub layers: Vec<DenseLayer>,
}

impl MapParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Arch, input_dim: usize, k: usize, standardize: Standardizer, seed: u64) -> Self {
        let shapes: Vec<(usize, usize)> = match arch {
            Arch::LinearSoftmax => vec![(k, input_dim)],
            Arch::TwoHidden => vec![
                (HIDDEN_WIDTH, input_dim),
                (HIDDEN_WIDTH, HIDDEN_WIDTH),
                (k, HIDDEN_WIDTH),
            ],
        };
        let mut r = rng::seeded(seed, 0);
        let layers = shapes
            .into_iter()
            .map(|(rows, cols)| {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                let mut layer = DenseLayer::zeros(rows, cols);
                for w in &mut layer.weights {
                    *w = (2.0 * unit_f64(&mut r) - 1.0) * a;
                }
                layer
            })
            .collect();
        Self {
            arch,
            input_dim,
            k,
            seed,
            standardize,
            layers,
        }
    }

    /// All-zero linear map: uniform assignment everywhere.
    pub fn zeros(input_dim: usize, k: usize) -> Self {
        Self {
            arch: Arch::LinearSoftmax,
            input_dim,
            k,
            seed: 0,
            standardize: Standardizer::identity(input_dim),
            layers: vec![DenseLayer::zeros(k, input_dim)],
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(DenseLayer::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(DenseLayer::params_mut)
    }

    pub fn validate(&self) -> Result<()> {
        let mut cols = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.cols != cols || l.weights.len() != l.rows * l.cols || l.biases.len() != l.rows {
                return Err(Error::Validation(format!("layer {i} has inconsistent shape")));
            }
            cols = l.rows;
        }
        if cols != self.k || self.layers.is_empty() {
            return Err(Error::Validation(format!(
                "network output has {cols} units, expected k = {}",
                self.k
            )));
        }
        if self.standardize.mean.len() != self.input_dim || self.standardize.scale.len() != self.input_dim {
            return Err(Error::Validation(
                "standardization vectors do not match input_dim".into(),
            ));
        }
        if self.params().any(|v| !v.is_finite()) {
            return Err(Error::Validation("map parameters must be finite".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Argument(format!(
                "embedding has dimension {}, map expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Layer inputs (post-activation) for every layer plus the softmax output.
    fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = self.standardize.apply(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a);
            inputs.push(a);
            a = if i < last {
                z.into_iter().map(|v| v.max(0.0)).collect()
            } else {
                z
            };
        }
        (inputs, softmax(&a))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / total).collect()
}

/// Probability vector over the K clusters.
pub fn soft_assign(params: &MapParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    Ok(params.forward(x).1)
}

/// `gamma(x, h) = soft_assign(x) . Psi(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedGamma {
    params: MapParams,
}

pub fn learned_gamma(params: MapParams) -> LearnedGamma {
    LearnedGamma { params }
}

impl LearnedGamma {
    pub fn params(&self) -> &MapParams {
        &self.params
    }

    fn combine(&self, probs: &[f64], feature: &LlmFeature) -> Result<f64> {
        if !matches!(feature.kind, FeatureKind::ClusterError | FeatureKind::BtlCluster)
            || feature.len() != self.params.k
        {
            return Err(Error::Argument(format!(
                "learned map needs a per-cluster feature of length {}; {:?} is {} of length {}",
                self.params.k,
                feature.llm_id,
                feature.kind.as_str(),
                feature.len()
            )));
        }
        Ok(clamp_unit(probs.iter().zip(&feature.values).map(|(p, v)| p * v).sum()))
    }
}

impl GammaEstimator for LearnedGamma {
    fn descriptor(&self) -> Descriptor {
        Descriptor {
            kind: "learned_map".into(),
            params: vec![("k".into(), self.params.k as f64)],
        }
    }

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64> {
        self.combine(&soft_assign(&self.params, x)?, feature)
    }

    fn gamma_pool(&self, x: &[f64], pool: &[PoolEntry]) -> Result<Vec<f64>> {
        let probs = soft_assign(&self.params, x)?;
        pool.iter().map(|e| self.combine(&probs, &e.feature)).collect()
    }
}

/// One training example: an embedding and its labels for each training LLM.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub embedding: &'a [f64],
    pub labels: &'a [Option<f64>],
}

fn feature_matrix(features: &[LlmFeature], k: usize) -> Result<Vec<&[f64]>> {
    features
        .iter()
        .map(|f| {
            if f.len() != k {
                Err(Error::Argument(format!(
                    "feature {:?} has {} entries, map has k = {k}",
                    f.llm_id,
                    f.len()
                )))
            } else {
                Ok(f.values.as_slice())
            }
        })
        .collect()
}

/// Mean clamped log loss over observed (example, LLM) pairs and its exact
/// gradient, shaped like `params.layers`.
pub fn loss_and_grad(
    params: &MapParams,
    batch: &[Example<'_>],
    features: &[LlmFeature],
    clamp_eps: f64,
) -> Result<(f64, Vec<DenseLayer>)> {
    let psi = feature_matrix(features, params.k)?;
    let observed: usize = batch.iter().map(|e| e.labels.iter().flatten().count()).sum();
    if observed == 0 {
        return Err(Error::Argument("batch has no observed labels".into()));
    }
    let norm = 1.0 / observed as f64;
    let mut grads: Vec<DenseLayer> = params
        .layers
        .iter()
        .map(|l| DenseLayer::zeros(l.rows, l.cols))
        .collect();
    let mut loss = 0.0;
    let k = params.k;
    let last = params.layers.len() - 1;

    for ex in batch {
        params.check_input(ex.embedding)?;
        if ex.labels.len() != psi.len() {
            return Err(Error::Argument(format!(
                "example has {} labels for {} LLM features",
                ex.labels.len(),
                psi.len()
            )));
        }
        let (inputs, probs) = params.forward(ex.embedding);
        let mut g_probs = vec![0.0; k];
        for (label, row) in ex.labels.iter().zip(&psi) {
            let Some(l) = *label else { continue };
            let gamma: f64 = probs.iter().zip(row.iter()).map(|(p, v)| p * v).sum();
            let g = gamma.clamp(clamp_eps, 1.0 - clamp_eps);
            loss -= norm * (l * g.ln() + (1.0 - l) * (1.0 - g).ln());
            if gamma > clamp_eps && gamma < 1.0 - clamp_eps {
                let dg = norm * (-l / g + (1.0 - l) / (1.0 - g));
                for (gp, v) in g_probs.iter_mut().zip(row.iter()) {
                    *gp += dg * v;
                }
            }
        }
        // Softmax Jacobian.
        let dot: f64 = probs.iter().zip(&g_probs).map(|(p, g)| p * g).sum();
        let mut g_z: Vec<f64> = probs.iter().zip(&g_probs).map(|(p, g)| p * (g - dot)).collect();

        for li in (0..=last).rev() {
            let layer = &params.layers[li];
            let a = &inputs[li];
            let grad = &mut grads[li];
            for (r, gz) in g_z.iter().enumerate() {
                grad.biases[r] += gz;
                let row = &mut grad.weights[r * layer.cols..(r + 1) * layer.cols];
                for (w, x) in row.iter_mut().zip(a) {
                    *w += gz * x;
                }
            }
            if li == 0 {
                break;
            }
            // Back through W and the ReLU producing `a` (a > 0 iff z > 0).
            let mut g_a = vec![0.0; layer.cols];
            for (r, gz) in g_z.iter().enumerate() {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (ga, w) in g_a.iter_mut().zip(row) {
                    *ga += gz * w;
                }
            }
            g_z = g_a
                .into_iter()
                .zip(a)
                .map(|(g, &x)| if x > 0.0 { g } else { 0.0 })
                .collect();
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub clamp_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            learning_rate: 0.005,
            optimizer: Optimizer::Adam,
            clamp_eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Argument(format!(
                "clamp_eps {} must lie in (0, 0.5)",
                self.clamp_eps
            )));
        }
        Ok(())
    }
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut MapParams, grads: &[DenseLayer], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        let g = grads.iter().flat_map(DenseLayer::params);
        for (((p, g), m), v) in params.params_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
        }
    }
}

/// Training summary: the full-training-set loss before training and after
/// each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Trains the map and returns the final-epoch parameters.
pub fn train_map(
    train_embeddings: &[Vec<f64>],
    train_labels: &LabelMatrix,
    features: &[LlmFeature],
    arch: Arch,
    config: &TrainConfig,
) -> Result<MapParams> {
    train_map_with_history(train_embeddings, train_labels, features, arch, config).map(|(p, _)| p)
}

pub fn train_map_with_history(
    train_embeddings: &[Vec<f64>],
    train_labels: &LabelMatrix,
    features: &[LlmFeature],
    arch: Arch,
    config: &TrainConfig,
) -> Result<(MapParams, TrainHistory)> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::Argument("no training LLM features".into()));
    }
    if features.len() != train_labels.n_llms() || train_embeddings.len() != train_labels.n_prompts() {
        return Err(Error::Argument(format!(
            "{} features and {} embeddings for a {}x{} label matrix",
            features.len(),
            train_embeddings.len(),
            train_labels.n_prompts(),
            train_labels.n_llms()
        )));
    }
    let k = features[0].len();
    let input_dim = train_embeddings.first().map_or(0, Vec::len);
    let rows: Vec<Vec<Option<f64>>> = (0..train_labels.n_prompts()).map(|r| train_labels.row(r)).collect();
    let usable: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].iter().any(Option::is_some))
        .collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData(
            "no training example has an observed label".into(),
        ));
    }
    let examples: Vec<Example<'_>> = usable
        .iter()
        .map(|&r| Example {
            embedding: &train_embeddings[r],
            labels: &rows[r],
        })
        .collect();

    let mut params = MapParams::init(arch, input_dim, k, Standardizer::fit(train_embeddings), config.seed);
    let full_loss = |p: &MapParams| loss_and_grad(p, &examples, features, config.clamp_eps).map(|(l, _)| l);
    let initial_loss = full_loss(&params)?;

    let mut adam = Adam::new(params.n_params());
    let mut shuffle = rng::seeded(config.seed, 1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        rng::fisher_yates(&mut order, &mut shuffle);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            let (loss, grads) = loss_and_grad(&params, &batch, features, config.clamp_eps)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: b,
                    message: format!("loss is {loss}"),
                });
            }
            match config.optimizer {
                Optimizer::Adam => adam.step(&mut params, &grads, config.learning_rate),
                Optimizer::Sgd => {
                    let g = grads.iter().flat_map(DenseLayer::params);
                    for (p, g) in params.params_mut().zip(g) {
                        *p -= config.learning_rate * g;
                    }
                }
            }
            if params.params().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    batch: b,
                    message: "parameters became non-finite".into(),
                });
            }
        }
        epoch_losses.push(full_loss(&params)?);
    }
    Ok((
        params,
        TrainHistory {
            initial_loss,
            epoch_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(values: Vec<f64>) -> LlmFeature {
        LlmFeature {
            llm_id: "m".into(),
            kind: FeatureKind::ClusterError,
            support: vec![1; values.len()],
            values,
        }
    }

    fn random_params(arch: Arch, d: usize, k: usize, seed: u64) -> MapParams {
        let mut p = MapParams::init(arch, d, k, Standardizer::identity(d), seed);
        let mut r = rng::seeded(seed, 7);
        for b in p.layers.iter_mut().flat_map(|l| l.biases.iter_mut()) {
            *b = unit_f64(&mut r) - 0.5;
        }
        p
    }

    #[test]
    fn zero_params_are_uniform() {
        let p = MapParams::zeros(3, 4);
        assert_eq!(soft_assign(&p, &[1.0, -2.0, 0.5]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn large_logit_saturates() {
        let mut p = MapParams::zeros(1, 3);
        p.layers[0].biases[1] = 50.0;
        assert!(soft_assign(&p, &[0.0]).unwrap()[1] > 1.0 - 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one() {
        for arch in [Arch::LinearSoftmax, Arch::TwoHidden] {
            let p = random_params(arch, 5, 4, 3);
            let mut r = rng::seeded(1, 0);
            for _ in 0..100 {
                let x: Vec<f64> = (0..5).map(|_| 4.0 * unit_f64(&mut r) - 2.0).collect();
                let s = soft_assign(&p, &x).unwrap();
                assert!(s.iter().all(|&v| v >= 0.0));
                assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert!(matches!(
            soft_assign(&MapParams::zeros(2, 2), &[0.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn shifting_final_biases_changes_nothing() {
        let p = random_params(Arch::TwoHidden, 3, 5, 9);
        let mut q = p.clone();
        for b in &mut q.layers.last_mut().unwrap().biases {
            *b += 3.7;
        }
        let x = [0.3, -1.2, 0.8];
        for (a, b) in soft_assign(&p, &x).unwrap().iter().zip(soft_assign(&q, &x).unwrap()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn learned_gamma_is_a_convex_combination() {
        let g = learned_gamma(MapParams::zeros(2, 2));
        assert!((g.gamma(&[0.0, 0.0], &feature(vec![0.2, 0.8])).unwrap() - 0.5).abs() < 1e-15);
        let mut p = MapParams::zeros(2, 2);
        p.layers[0].biases[1] = 60.0;
        let g = learned_gamma(p);
        assert!((g.gamma(&[0.0, 0.0], &feature(vec![0.2, 0.8])).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            g.gamma(&[0.0, 0.0], &feature(vec![0.2])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn learned_gamma_matches_explicit_dot_product() {
        let p = random_params(Arch::LinearSoftmax, 3, 4, 5);
        let g = learned_gamma(p.clone());
        let mut r = rng::seeded(6, 0);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| unit_f64(&mut r) * 2.0 - 1.0).collect();
            let f = feature((0..4).map(|_| unit_f64(&mut r)).collect());
            let probs = soft_assign(&p, &x).unwrap();
            let mut dot = 0.0;
            for j in 0..4 {
                dot += probs[j] * f.values[j];
            }
            assert!((g.gamma(&x, &f).unwrap() - dot).abs() < 1e-12);
        }
    }

    #[test]
    fn learned_gamma_scales_with_features() {
        let p = random_params(Arch::LinearSoftmax, 2, 3, 8);
        let g = learned_gamma(p);
        let base = feature(vec![0.3, 0.9, 0.6]);
        let x = [0.4, -0.1];
        let g1 = g.gamma(&x, &base).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let scaled = feature(base.values.iter().map(|v| v * alpha).collect());
            assert!((g.gamma(&x, &scaled).unwrap() - alpha * g1).abs() < 1e-12);
        }
    }

    #[test]
    fn uninformative_features_give_ln2() {
        let p = random_params(Arch::LinearSoftmax, 2, 3, 2);
        let xs = [vec![0.1, 0.2], vec![-1.0, 3.0]];
        let labels = [vec![Some(1.0), Some(0.0)], vec![Some(0.0), None]];
        let batch: Vec<Example> = xs
            .iter()
            .zip(&labels)
            .map(|(x, l)| Example {
                embedding: x,
                labels: l,
            })
            .collect();
        let feats = [feature(vec![0.5; 3]), feature(vec![0.5; 3])];
        let (loss, _) = loss_and_grad(&p, &batch, &feats, 1e-6).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn no_observed_labels_is_an_error() {
        let p = MapParams::zeros(1, 2);
        let x = vec![0.0];
        let l = vec![None];
        let batch = [Example {
            embedding: &x,
            labels: &l,
        }];
        let err = loss_and_grad(&p, &batch, &[feature(vec![0.1, 0.9])], 1e-6);
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn negative_gradient_is_a_descent_direction() {
        let p = MapParams::zeros(2, 2);
        let x = vec![1.0, -0.5];
        let l = vec![Some(1.0)];
        let batch = [Example {
            embedding: &x,
            labels: &l,
        }];
        let feats = [feature(vec![0.95, 0.05])];
        let (l0, g) = loss_and_grad(&p, &batch, &feats, 1e-6).unwrap();
        let mut q = p.clone();
        for (w, d) in q.params_mut().zip(g.iter().flat_map(DenseLayer::params)) {
            *w -= 1e-3 * d;
        }
        let (l1, _) = loss_and_grad(&q, &batch, &feats, 1e-6).unwrap();
        assert!(l1 < l0);
        // The step moves mass toward the cluster whose error matches the label.
        assert!(soft_assign(&q, &x).unwrap()[0] > 0.5);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
        let bad = TrainConfig {
            clamp_eps: 0.5,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
    }

    #[test]
    fn params_json_round_trip() {
        let p = random_params(Arch::TwoHidden, 2, 3, 4);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"arch\":\"two_hidden\""));
        let back: MapParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        back.validate().unwrap();
    }
}

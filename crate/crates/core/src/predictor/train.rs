//! L2-regularized logistic regression over late-fusion features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, DEFAULT_HASH_DIM, IMAGE_DIM};
use crate::data::{Label, LabeledDataset};
use crate::segment::{MaskedMeme, SegmentError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training data must contain both classes")]
    SingleClassDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("sample {id:?}: {source}")]
    Segment { id: String, source: SegmentError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Mini-batch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub hash_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            weight_decay: 1e-3,
            batch_size: None,
            seed: 42,
            hash_dim: DEFAULT_HASH_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("weight decay {} must be non-negative", self.weight_decay)));
        }
        if self.batch_size == Some(0) {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.hash_dim == 0 {
            return Err(TrainError::InvalidConfig("hash dimension must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hash_dim: usize,
    /// Text weights (`hash_dim`) followed by image weights (16).
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainMeta,
}

impl ModelParams {
    pub fn zeros(cfg: &TrainConfig) -> Self {
        Self {
            hash_dim: cfg.hash_dim,
            weights: vec![0.0; cfg.hash_dim + IMAGE_DIM],
            bias: 0.0,
            meta: TrainMeta {
                epochs: cfg.epochs,
                learning_rate: cfg.learning_rate,
                weight_decay: cfg.weight_decay,
                seed: cfg.seed,
            },
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn score(&self, input: &MaskedMeme) -> f64 {
        sigmoid(self.logit(&extract_features(input, self.hash_dim).to_dense()))
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// One training example: dense features and a 0/1 target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    /// Mean cross-entropy plus penalty.
    pub loss: f64,
    pub data_loss: f64,
    /// `weight_decay / 2 · ‖w‖²`; the bias is not penalized.
    pub penalty: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: f64,
}

pub fn loss_and_gradient(params: &ModelParams, batch: &[&Example], weight_decay: f64) -> LossGradient {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let n = batch.len() as f64;
    let mut grad_weights = vec![0.0; params.weights.len()];
    let mut grad_bias = 0.0;
    let mut data_loss = 0.0;
    for ex in batch {
        let z = params.logit(&ex.x);
        data_loss += softplus(z) - ex.y * z;
        let r = sigmoid(z) - ex.y;
        for (g, v) in grad_weights.iter_mut().zip(&ex.x) {
            if *v != 0.0 {
                *g += r * v;
            }
        }
        grad_bias += r;
    }
    data_loss /= n;
    grad_bias /= n;
    let mut sq = 0.0;
    for (g, w) in grad_weights.iter_mut().zip(&params.weights) {
        *g = *g / n + weight_decay * w;
        sq += w * w;
    }
    let penalty = 0.5 * weight_decay * sq;
    LossGradient { loss: data_loss + penalty, data_loss, penalty, grad_weights, grad_bias }
}

pub fn examples_from(dataset: &LabeledDataset, hash_dim: usize) -> Result<Vec<Example>, TrainError> {
    dataset
        .samples
        .iter()
        .map(|m| {
            let view = MaskedMeme::unmasked(m).map_err(|source| TrainError::Segment { id: m.id.clone(), source })?;
            Ok(Example {
                x: extract_features(&view, hash_dim).to_dense(),
                y: if m.label == Label::Hateful { 1.0 } else { 0.0 },
            })
        })
        .collect()
}

/// Trained parameters plus the full-data loss before training and after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_history: Vec<f64>,
}

pub fn train_late_fusion(train: &LabeledDataset, cfg: &TrainConfig) -> Result<ModelParams, TrainError> {
    Ok(train_with_history(train, cfg)?.params)
}

pub fn train_with_history(train: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let counts = train.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(TrainError::SingleClassDataset);
    }
    let examples = examples_from(train, cfg.hash_dim)?;
    Ok(fit(&examples, cfg))
}

/// Mini-batch gradient descent from zero initialization. Batches follow a
/// ChaCha8 shuffle seeded by `cfg.seed`, so runs are bit-reproducible.
pub fn fit(examples: &[Example], cfg: &TrainConfig) -> TrainOutcome {
    let mut params = ModelParams::zeros(cfg);
    let all: Vec<&Example> = examples.iter().collect();
    let full_loss = |p: &ModelParams| loss_and_gradient(p, &all, cfg.weight_decay).loss;
    let mut history = vec![full_loss(&params)];
    let batch = cfg.batch_size.unwrap_or(examples.len()).min(examples.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..cfg.epochs {
        if batch < examples.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let b: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let g = loss_and_gradient(&params, &b, cfg.weight_decay);
            for (w, gw) in params.weights.iter_mut().zip(&g.grad_weights) {
                *w -= cfg.learning_rate * gw;
            }
            params.bias -= cfg.learning_rate * g.grad_bias;
        }
        history.push(full_loss(&params));
    }
    TrainOutcome { params, loss_history: history }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ex(x: Vec<f64>, y: f64) -> Example {
        Example { x, y }
    }

    fn small_cfg(dim: usize) -> TrainConfig {
        TrainConfig { hash_dim: dim - IMAGE_DIM, ..TrainConfig::default() }
    }

    #[test]
    fn zero_weights_give_ln2() {
        let cfg = small_cfg(IMAGE_DIM + 2);
        let p = ModelParams::zeros(&cfg);
        let a = ex(vec![1.0; IMAGE_DIM + 2], 1.0);
        let b = ex(vec![0.5; IMAGE_DIM + 2], 0.0);
        let lg = loss_and_gradient(&p, &[&a, &b], 0.3);
        assert!((lg.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(lg.penalty, 0.0);
    }

    #[test]
    fn penalty_is_linear_in_decay() {
        let cfg = small_cfg(IMAGE_DIM + 3);
        let mut p = ModelParams::zeros(&cfg);
        p.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.1 - 0.5);
        let a = ex(vec![1.0; IMAGE_DIM + 3], 1.0);
        let one = loss_and_gradient(&p, &[&a], 0.01);
        let two = loss_and_gradient(&p, &[&a], 0.02);
        assert!((two.penalty - 2.0 * one.penalty).abs() < 1e-15);
        assert_eq!(one.data_loss, two.data_loss);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = IMAGE_DIM + 6;
        let cfg = small_cfg(dim);
        let batch: Vec<Example> = (0..12)
            .map(|_| ex((0..dim).map(|_| rng.random_range(-1.0..2.0)).collect(), rng.random_range(0..2) as f64))
            .collect();
        let refs: Vec<&Example> = batch.iter().collect();
        let mut p = ModelParams::zeros(&cfg);
        p.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        p.bias = 0.3;
        let g = loss_and_gradient(&p, &refs, 0.05);
        let h = 1e-6;
        for j in 0..dim {
            let mut plus = p.clone();
            plus.weights[j] += h;
            let mut minus = p.clone();
            minus.weights[j] -= h;
            let fd = (loss_and_gradient(&plus, &refs, 0.05).loss - loss_and_gradient(&minus, &refs, 0.05).loss) / (2.0 * h);
            let rel = (fd - g.grad_weights[j]).abs() / fd.abs().max(g.grad_weights[j].abs()).max(1e-8);
            assert!(rel < 1e-4, "dim {j}: fd {fd} analytic {}", g.grad_weights[j]);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig { epochs: 0, ..small_cfg(IMAGE_DIM + 1) };
        let data = vec![ex(vec![1.0; IMAGE_DIM + 1], 1.0), ex(vec![0.0; IMAGE_DIM + 1], 0.0)];
        let out = fit(&data, &cfg);
        assert_eq!(out.params, ModelParams::zeros(&cfg));
        assert_eq!(out.loss_history.len(), 1);
    }

    #[test]
    fn minibatch_runs_are_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = IMAGE_DIM + 4;
        let data: Vec<Example> = (0..30)
            .map(|_| ex((0..dim).map(|_| rng.random_range(0.0..1.0)).collect(), rng.random_range(0..2) as f64))
            .collect();
        let cfg = TrainConfig { epochs: 20, batch_size: Some(7), ..small_cfg(dim) };
        let a = fit(&data, &cfg);
        let b = fit(&data, &cfg);
        assert_eq!(a, b);
        let c = fit(&data, &TrainConfig { seed: 1, ..cfg });
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { weight_decay: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: Some(0), ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}

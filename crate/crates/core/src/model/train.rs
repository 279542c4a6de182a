//! SGD with momentum, batch gradients and the seeded training loop.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LossBreakdown, Model, ModelError, ModelParams};
use crate::context::FeatureExample;
use crate::util::stage_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lambda_match: f64,
    /// Evaluate per-example gradients on the rayon pool. Reduction order is
    /// fixed either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            batch_size: 16,
            lr: 1e-2,
            momentum: 0.9,
            lambda_match: 0.1,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.batch_size == 0 {
            return Err(("batch_size", "must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err((
                "lr",
                format!("must be finite and non-negative, got {}", self.lr),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err((
                "momentum",
                format!("must be in [0, 1), got {}", self.momentum),
            ));
        }
        if !(self.lambda_match.is_finite() && self.lambda_match >= 0.0) {
            return Err((
                "lambda_match",
                format!("must be finite and non-negative, got {}", self.lambda_match),
            ));
        }
        Ok(())
    }
}

/// Momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub momentum: f64,
    pub velocity: ModelParams,
}

impl Optimizer {
    pub fn new(params: &ModelParams, momentum: f64) -> Self {
        Optimizer {
            momentum,
            velocity: params.zeros_like(),
        }
    }
}

/// Mean loss and mean gradient over `batch`, reduced in batch order.
pub fn batch_loss_and_grad(
    model: &Model,
    batch: &[&FeatureExample],
    lambda: f64,
    parallel: bool,
    step: usize,
) -> Result<(LossBreakdown, ModelParams), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Training("empty batch".into()));
    }
    let one = |ex: &&FeatureExample| model.loss_and_grad(ex, lambda);
    let results: Vec<_> = if parallel {
        batch.par_iter().map(one).collect()
    } else {
        batch.iter().map(one).collect()
    };
    let mut grad = model.params.zeros_like();
    let (mut recon, mut matched) = (0.0, 0.0);
    for (i, r) in results.into_iter().enumerate() {
        let (loss, g) = r?;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite {
                what: "loss",
                step,
                batch_index: i,
                parameter: "total".into(),
            });
        }
        if let Some(name) = g.first_non_finite() {
            return Err(ModelError::NonFinite {
                what: "gradient",
                step,
                batch_index: i,
                parameter: name,
            });
        }
        recon += loss.recon;
        matched += loss.matched;
        grad.add_scaled(&g, 1.0);
    }
    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    Ok((LossBreakdown::new(recon / n, matched / n, lambda), grad))
}

/// One update `v = mu v + g; p -= lr v`. With `lr == 0` the parameters are
/// left untouched.
pub fn train_step(
    model: &mut Model,
    opt: &mut Optimizer,
    batch: &[&FeatureExample],
    lr: f64,
    lambda: f64,
    parallel: bool,
    step: usize,
) -> Result<LossBreakdown, ModelError> {
    let (loss, grad) = batch_loss_and_grad(model, batch, lambda, parallel, step)?;
    opt.velocity.scale(opt.momentum);
    opt.velocity.add_scaled(&grad, 1.0);
    if lr != 0.0 {
        model.params.add_scaled(&opt.velocity, -lr);
        if let Some(name) = model.params.first_non_finite() {
            return Err(ModelError::NonFinite {
                what: "parameter",
                step,
                batch_index: 0,
                parameter: name,
            });
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub history: Vec<LossBreakdown>,
}

/// Trains for `cfg.steps` steps on shuffled batches drawn from `examples`.
pub fn fit(
    model: &mut Model,
    examples: &[FeatureExample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::Training("no training examples".into()));
    }
    cfg.validate()
        .map_err(|(k, m)| ModelError::Training(format!("{k}: {m}")))?;
    let mut rng = stage_rng(seed, "train");
    let mut opt = Optimizer::new(&model.params, cfg.momentum);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::with_capacity(cfg.steps);
    let size = cfg.batch_size.min(examples.len());
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&examples[order[cursor]]);
            cursor += 1;
        }
        let loss = train_step(
            model,
            &mut opt,
            &batch,
            cfg.lr,
            cfg.lambda_match,
            cfg.parallel,
            step,
        )?;
        history.push(loss);
    }
    Ok(TrainReport {
        steps: cfg.steps,
        history,
    })
}

//! Style-conditioned future-pose model: encoders, decoder, losses, training.

mod gradcheck;
pub mod layers;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

pub use gradcheck::{
    compare_gradients, finite_difference_gradient, gradient_check, gradient_check_mutated,
    DEFAULT_GRADCHECK_EPSILON,
};
pub use network::{loss_recon, ForwardTrace, Frame, Model};
pub use params::{
    read_checkpoint, write_checkpoint, Block, GameEncoder, ModelConfig, ModelParams,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{batch_loss_and_grad, fit, train_step, Optimizer, TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite {what} at step {step}, batch index {batch_index}, parameter {parameter}")]
    NonFinite {
        what: &'static str,
        step: usize,
        batch_index: usize,
        parameter: String,
    },
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encoder output of fixed width `d_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    #[serde(rename = "match")]
    pub matched: f64,
    pub total: f64,
    pub lambda_match: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, matched: f64, lambda_match: f64) -> Self {
        LossBreakdown {
            recon,
            matched,
            total: recon + lambda_match * matched,
            lambda_match,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.recon.is_finite() && self.matched.is_finite() && self.total.is_finite()
    }
}

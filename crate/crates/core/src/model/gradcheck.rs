//! Central finite-difference gradient checks.

use super::{Model, ModelError, ModelParams};
use crate::context::FeatureExample;

pub const DEFAULT_GRADCHECK_EPSILON: f64 = 1e-3;

/// Fourth-order central differences of the total loss for every parameter.
pub fn finite_difference_gradient(
    model: &Model,
    ex: &FeatureExample,
    lambda: f64,
    epsilon: f64,
) -> Result<ModelParams, ModelError> {
    let mut probe = model.clone();
    let mut grad = model.params.zeros_like();
    let lens: Vec<usize> = model.params.blocks().iter().map(|b| b.data.len()).collect();
    for (b, len) in lens.into_iter().enumerate() {
        for k in 0..len {
            let orig = probe.params.slices_mut()[b][k];
            let mut at = |offset: f64| -> Result<f64, ModelError> {
                probe.params.slices_mut()[b][k] = orig + offset;
                Ok(probe.forward(ex, lambda)?.breakdown.total)
            };
            let (p1, m1) = (at(epsilon)?, at(-epsilon)?);
            let (p2, m2) = (at(2.0 * epsilon)?, at(-2.0 * epsilon)?);
            probe.params.slices_mut()[b][k] = orig;
            grad.slices_mut()[b][k] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
        }
    }
    Ok(grad)
}

/// Max over parameters of `|a - b| / max(1e-8, |a| + |b|)`, with the name
/// of the block where it occurs.
pub fn compare_gradients(analytic: &ModelParams, numeric: &ModelParams) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (a, n) in analytic.blocks().iter().zip(numeric.blocks()) {
        for (x, y) in a.data.iter().zip(n.data) {
            let err = (x - y).abs() / (x.abs() + y.abs()).max(1e-8);
            if worst.1.is_empty() || err > worst.0 {
                worst = (err, a.name.clone());
            }
        }
    }
    worst
}

pub fn gradient_check(
    model: &Model,
    ex: &FeatureExample,
    lambda: f64,
    epsilon: f64,
) -> Result<f64, ModelError> {
    gradient_check_mutated(model, ex, lambda, epsilon, |_| {}).map(|(e, _)| e)
}

/// Gradient check where `mutate` may tamper with the analytic gradient
/// before comparison.
pub fn gradient_check_mutated(
    model: &Model,
    ex: &FeatureExample,
    lambda: f64,
    epsilon: f64,
    mutate: impl FnOnce(&mut ModelParams),
) -> Result<(f64, String), ModelError> {
    let (_, mut analytic) = model.loss_and_grad(ex, lambda)?;
    mutate(&mut analytic);
    let numeric = finite_difference_gradient(model, ex, lambda, epsilon)?;
    Ok(compare_gradients(&analytic, &numeric))
}

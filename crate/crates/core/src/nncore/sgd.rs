//! Momentum SGD with optional mask freezing.

use crate::error::{Error, Result};
use crate::nncore::{TrainConfig, WeightVector};
use crate::pruning::PruneMask;

/// Effective learning rate at `iter`: the base rate times every drop whose
/// iteration has been reached.
pub fn learning_rate_at(config: &TrainConfig, iter: usize) -> f64 {
    let mut lr = config.learning_rate;
    for &(at, mult) in &config.lr_drops {
        if iter >= at {
            lr *= mult;
        }
    }
    lr
}

/// One update: `velocity = momentum * velocity + grad`,
/// `weights -= lr(iter) * velocity`.
///
/// With a mask, every masked-out prunable coordinate of both the weights and
/// the velocity is pinned to exactly zero afterwards, so no state leaks
/// through frozen weights.
pub fn sgd_step(
    weights: &mut WeightVector,
    velocity: &mut WeightVector,
    grad: &WeightVector,
    config: &TrainConfig,
    iter: usize,
    mask: Option<&PruneMask>,
) -> Result<()> {
    if !weights.space().same_layout(velocity.space())
        || !weights.space().same_layout(grad.space())
    {
        return Err(Error::alignment(
            "weights, velocity and gradient must share one parameter space",
        ));
    }
    if let Some(m) = mask {
        if !m.space().same_layout(weights.space()) {
            return Err(Error::alignment("mask is not aligned to the weights"));
        }
    }
    if iter >= config.total_iters {
        return Err(Error::usage(format!(
            "iteration {iter} is outside the training budget {}",
            config.total_iters
        )));
    }

    let lr = learning_rate_at(config, iter);
    let momentum = config.momentum;
    let w = weights.values_mut();
    let v = velocity.values_mut();
    let g = grad.values();
    for i in 0..w.len() {
        v[i] = momentum * v[i] + g[i];
        w[i] -= lr * v[i];
    }

    if let Some(m) = mask {
        for seg in m.space().prunable_segments() {
            for i in 0..seg.len {
                if !m.bit(seg.prunable_offset + i) {
                    w[seg.flat_offset + i] = 0.0;
                    v[seg.flat_offset + i] = 0.0;
                }
            }
        }
    }
    Ok(())
}

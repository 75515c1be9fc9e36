//! The shared training loop.
//!
//! One "sample of SGD noise" is a [`NoiseSpec`]: the data-order seed drives
//! per-epoch shuffles, the augment seed drives per-iteration augmentation.
//! Given identical weights, config, noise and dataset, the loop reproduces a
//! bit-identical weight trajectory.

use std::ops::Range;

use crate::data::{augment, epoch_order, Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::models::ModelGraph;
use crate::nncore::{loss_and_grad, sgd_step, TrainConfig, WeightVector};
use crate::pruning::PruneMask;

/// Runs iterations `span.start..span.end` of the schedule, updating
/// `weights` and `velocity` in place. Epoch boundaries are derived from the
/// dataset length and batch size, so an iteration index always maps to the
/// same examples regardless of where the span starts.
pub fn train_span(
    graph: &ModelGraph,
    weights: &mut WeightVector,
    velocity: &mut WeightVector,
    config: &TrainConfig,
    noise: &NoiseSpec,
    dataset: &Dataset,
    span: Range<usize>,
    mask: Option<&PruneMask>,
) -> Result<()> {
    config.validate()?;
    if span.end > config.total_iters {
        return Err(Error::usage(format!(
            "span end {} exceeds the training budget {}",
            span.end, config.total_iters
        )));
    }
    if dataset.n() == 0 {
        return Err(Error::usage("cannot train on an empty dataset"));
    }

    let n = dataset.n();
    let iters_per_epoch = n.div_ceil(config.batch_size);
    let mut cached_epoch = usize::MAX;
    let mut perm: Vec<usize> = Vec::new();

    for iter in span {
        let epoch = iter / iters_per_epoch;
        if epoch != cached_epoch {
            perm = epoch_order(n, epoch, noise.data_order_seed);
            cached_epoch = epoch;
        }
        let pos = iter % iters_per_epoch;
        let start = pos * config.batch_size;
        let end = (start + config.batch_size).min(n);
        let batch = dataset.gather(&perm[start..end])?;
        let batch = augment(&batch, noise.augment_seed, iter, noise.augment_strength)?;
        let (_, grad) = loss_and_grad(graph, weights, &batch).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("{msg} (iteration {iter})")),
            other => other,
        })?;
        sgd_step(weights, velocity, &grad, config, iter, mask)?;
    }
    Ok(())
}

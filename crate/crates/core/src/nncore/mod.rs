//! Minimal deterministic neural-network engine.
//!
//! Everything here runs in 64-bit floating point with fixed, sequential
//! reduction orders, so that identical inputs reproduce bit-identical
//! outputs on any platform. That determinism is a contract the rest of
//! the crate (checkpoint digests, experiment resumability) builds on.

mod engine;
mod rng;
mod sgd;
mod train;

pub use engine::{forward_logits, loss_and_grad};
pub use rng::{derive_seed_bytes, derive_u64, seeded_rng};
pub use sgd::{learning_rate_at, sgd_step};
pub use train::train_span;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayer {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub prunable: bool,
}

impl ParamLayer {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A contiguous run of prunable coordinates: one prunable layer viewed both
/// in flat-vector coordinates and in prunable-only coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrunableSegment {
    pub layer_index: usize,
    pub flat_offset: usize,
    pub prunable_offset: usize,
    pub len: usize,
}

/// Describes the flat parameter layout of a model: which coordinates belong
/// to which layer and which of them are prunable.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    layers: Vec<ParamLayer>,
    segments: Vec<PrunableSegment>,
    d_total: usize,
    d_prunable: usize,
}

impl ParamSpace {
    /// Builds a space from an ordered layer table, validating that offsets
    /// are contiguous and non-overlapping.
    pub fn from_layers(layers: Vec<ParamLayer>) -> Result<ParamSpace> {
        let mut expected_offset = 0usize;
        let mut segments = Vec::new();
        let mut d_prunable = 0usize;
        for (i, layer) in layers.iter().enumerate() {
            if layer.offset != expected_offset {
                return Err(Error::alignment(format!(
                    "layer {:?} has offset {} but {} parameters precede it",
                    layer.name, layer.offset, expected_offset
                )));
            }
            if layer.len() == 0 {
                return Err(Error::config(format!("layer {:?} is empty", layer.name)));
            }
            if layer.prunable {
                segments.push(PrunableSegment {
                    layer_index: i,
                    flat_offset: layer.offset,
                    prunable_offset: d_prunable,
                    len: layer.len(),
                });
                d_prunable += layer.len();
            }
            expected_offset += layer.len();
        }
        Ok(ParamSpace {
            layers,
            segments,
            d_total: expected_offset,
            d_prunable,
        })
    }

    pub fn layers(&self) -> &[ParamLayer] {
        &self.layers
    }

    /// Prunable layers in order, with both flat and prunable-only offsets.
    pub fn prunable_segments(&self) -> &[PrunableSegment] {
        &self.segments
    }

    pub fn d_total(&self) -> usize {
        self.d_total
    }

    pub fn d_prunable(&self) -> usize {
        self.d_prunable
    }

    /// True when both spaces describe the same layout. Checked wherever two
    /// vectors or masks must be aligned.
    pub fn same_layout(&self, other: &ParamSpace) -> bool {
        std::ptr::eq(self, other) || self.layers == other.layers
    }
}

/// Flat real-valued parameter vector aligned to a [`ParamSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    space: Arc<ParamSpace>,
}

impl WeightVector {
    pub fn zeros(space: Arc<ParamSpace>) -> WeightVector {
        WeightVector {
            values: vec![0.0; space.d_total()],
            space,
        }
    }

    pub fn from_values(space: Arc<ParamSpace>, values: Vec<f64>) -> Result<WeightVector> {
        if values.len() != space.d_total() {
            return Err(Error::alignment(format!(
                "weight vector has {} values but the space holds {} parameters",
                values.len(),
                space.d_total()
            )));
        }
        Ok(WeightVector { values, space })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<ParamSpace> {
        Arc::clone(&self.space)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::alignment(format!(
                "tensor data has {} entries, shape {:?} needs {}",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Size of one leading-dimension slice (an example, for batched data).
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.row_len();
        &self.data[i * len..(i + 1) * len]
    }
}

/// One minibatch: inputs plus integer class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Batch> {
        if inputs.shape().is_empty() || inputs.shape()[0] != labels.len() {
            return Err(Error::alignment(format!(
                "batch has {} labels but input shape {:?}",
                labels.len(),
                inputs.shape()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Hyperparameters for momentum SGD with step-wise learning-rate drops.
///
/// `lr_drops` is a list of `(iteration, multiplier)` pairs; the effective
/// rate at iteration `i` is `learning_rate` times the product of every
/// multiplier whose iteration is `<= i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    #[serde(default)]
    pub lr_drops: Vec<(usize, f64)>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::domain("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::domain("learning_rate must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::domain("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Desk-scale default: lr 0.1, momentum 0.9, batch 32, no drops.
    pub fn desk_default(total_iters: usize) -> TrainConfig {
        TrainConfig {
            total_iters,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            lr_drops: Vec::new(),
        }
    }
}

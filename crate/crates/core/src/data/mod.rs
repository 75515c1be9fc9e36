//! Datasets and the two seeded noise sources (data order, augmentation).
//!
//! The primary desk-scale task is two interleaved spirals; Gaussian blobs
//! add multi-class coverage. IDX and CIFAR-10 binary readers handle real
//! image data for larger runs. Test splits are never shuffled or augmented.

mod cifar;
mod idx;

pub use cifar::load_cifar10;
pub use idx::load_idx;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{seeded_rng, Batch, Tensor};

/// Which half of a dataset this is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// An immutable labelled dataset. The leading input dimension indexes
/// examples.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    split: Split,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        inputs: Tensor,
        labels: Vec<usize>,
        split: Split,
        class_count: usize,
    ) -> Result<Dataset> {
        if inputs.shape().is_empty() || inputs.shape()[0] != labels.len() {
            return Err(Error::alignment(format!(
                "{} labels for input shape {:?}",
                labels.len(),
                inputs.shape()
            )));
        }
        if labels.is_empty() {
            return Err(Error::usage("dataset must contain at least one example"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::domain(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            split,
            class_count,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Example shape as consumed by a model: rank-3 image data (n, h, w)
    /// gains a single channel.
    pub fn model_input_dims(&self) -> Vec<usize> {
        match self.inputs.shape() {
            [_, h, w] => vec![1, *h, *w],
            other => other[1..].to_vec(),
        }
    }

    /// Copies the given examples into a batch, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::usage("cannot gather an empty batch"));
        }
        let row = self.inputs.row_len();
        let mut data = Vec::with_capacity(indices.len() * row);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::usage(format!(
                    "example index {i} out of range ({} examples)",
                    self.n()
                )));
            }
            data.extend_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.model_input_dims());
        Batch::new(Tensor::new(shape, data)?, labels)
    }
}

/// Seeds defining one sample of SGD noise: a data order and an augmentation
/// stream. Two equal specs produce identical training streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub data_order_seed: u64,
    pub augment_seed: u64,
    pub augment_strength: f64,
}

/// A train split with its paired test split.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}

const SPIRAL_TURNS: f64 = 1.75;
const SPIRAL_R0: f64 = 0.1;
const SPIRAL_R1: f64 = 1.0;

/// Noise-free point of spiral `class` at parameter `u` in [0, 1).
pub fn spiral_point(class: usize, u: f64) -> (f64, f64) {
    let radius = SPIRAL_R0 + (SPIRAL_R1 - SPIRAL_R0) * u;
    let angle = SPIRAL_TURNS * std::f64::consts::TAU * u + class as f64 * std::f64::consts::PI;
    (radius * angle.cos(), radius * angle.sin())
}

fn spiral_split(
    n_per_class: usize,
    noise_sd: f64,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    // Train points sit at parameters i/n, test points at (i + 1/2)/n, so the
    // two splits are disjoint by construction even at zero noise.
    let (label, offset) = match split {
        Split::Train => ("spirals.train", 0.0),
        Split::Test => ("spirals.test", 0.5),
    };
    let mut rng = seeded_rng(seed, label);
    let mut data = Vec::with_capacity(n_per_class * 2 * 2);
    let mut labels = Vec::with_capacity(n_per_class * 2);
    for class in 0..2usize {
        for i in 0..n_per_class {
            let u = (i as f64 + offset) / n_per_class as f64;
            let (x, y) = spiral_point(class, u);
            let jx: f64 = rng.sample(StandardNormal);
            let jy: f64 = rng.sample(StandardNormal);
            data.push(x + noise_sd * jx);
            data.push(y + noise_sd * jy);
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::new(vec![n_per_class * 2, 2], data)?,
        labels,
        split,
        2,
    )
}

/// Two interleaved 2-D spirals, balanced classes, deterministic in `seed`.
pub fn gen_spirals(n_per_class: usize, noise_sd: f64, seed: u64) -> Result<DatasetPair> {
    if n_per_class < 1 {
        return Err(Error::domain("n_per_class must be at least 1"));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::domain("noise_sd must be non-negative"));
    }
    Ok(DatasetPair {
        train: spiral_split(n_per_class, noise_sd, seed, Split::Train)?,
        test: spiral_split(n_per_class, noise_sd, seed, Split::Test)?,
    })
}

/// Four Gaussian blobs on the unit circle; the multi-class desk task.
pub fn gen_blobs(n_per_class: usize, noise_sd: f64, seed: u64) -> Result<DatasetPair> {
    if n_per_class < 1 {
        return Err(Error::domain("n_per_class must be at least 1"));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::domain("noise_sd must be non-negative"));
    }
    let make = |label: &str, split: Split| -> Result<Dataset> {
        let mut rng = seeded_rng(seed, label);
        let mut data = Vec::with_capacity(n_per_class * 4 * 2);
        let mut labels = Vec::with_capacity(n_per_class * 4);
        for class in 0..4usize {
            let angle = class as f64 * std::f64::consts::FRAC_PI_2;
            let (cx, cy) = (angle.cos(), angle.sin());
            for _ in 0..n_per_class {
                let jx: f64 = rng.sample(StandardNormal);
                let jy: f64 = rng.sample(StandardNormal);
                data.push(cx + noise_sd * jx);
                data.push(cy + noise_sd * jy);
                labels.push(class);
            }
        }
        Dataset::new(
            Tensor::new(vec![n_per_class * 4, 2], data)?,
            labels,
            split,
            4,
        )
    };
    Ok(DatasetPair {
        train: make("blobs.train", Split::Train)?,
        test: make("blobs.test", Split::Test)?,
    })
}

/// The example order for one epoch: a permutation of `[0, n)` deterministic
/// in `(n, epoch_index, data_order_seed)`.
pub fn epoch_order(n: usize, epoch_index: usize, data_order_seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(data_order_seed, &format!("epoch_order/{epoch_index}"));
    perm.shuffle(&mut rng);
    perm
}

const MAX_SHIFT: i64 = 2;

/// Per-iteration augmentation, deterministic in `(augment_seed, iter)`.
///
/// Vector batches get additive Gaussian jitter of standard deviation
/// `strength`. Image batches get a random horizontal flip plus a shift of at
/// most [`MAX_SHIFT`] pixels per axis with zero padding. `strength == 0`
/// disables everything and returns the batch unchanged.
pub fn augment(batch: &Batch, augment_seed: u64, iter: usize, strength: f64) -> Result<Batch> {
    if !(strength >= 0.0) {
        return Err(Error::domain("augment strength must be non-negative"));
    }
    if strength == 0.0 {
        return Ok(batch.clone());
    }
    let mut rng = seeded_rng(augment_seed, &format!("augment/{iter}"));
    match *batch.inputs.shape() {
        [_, _] => {
            let mut out = batch.clone();
            for v in out.inputs.data_mut() {
                let j: f64 = rng.sample(StandardNormal);
                *v += strength * j;
            }
            Ok(out)
        }
        [n, c, h, w] => {
            let mut out = batch.clone();
            let plane = h * w;
            for e in 0..n {
                let flip: bool = rng.random_bool(0.5);
                let dx: i64 = rng.random_range(-MAX_SHIFT..=MAX_SHIFT);
                let dy: i64 = rng.random_range(-MAX_SHIFT..=MAX_SHIFT);
                let src = batch.inputs.row(e);
                let dst = &mut out.inputs.data_mut()[e * c * plane..(e + 1) * c * plane];
                for ch in 0..c {
                    for i in 0..h {
                        for j in 0..w {
                            let si = i as i64 - dy;
                            let sj = j as i64 - dx;
                            let v = if si >= 0 && si < h as i64 && sj >= 0 && sj < w as i64 {
                                let sj = if flip { w as i64 - 1 - sj } else { sj } as usize;
                                src[(ch * h + si as usize) * w + sj]
                            } else {
                                0.0
                            };
                            dst[(ch * h + i) * w + j] = v;
                        }
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::usage(format!(
            "augment expects vector or image batches, got shape {:?}",
            batch.inputs.shape()
        ))),
    }
}

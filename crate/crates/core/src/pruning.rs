//! One-shot global magnitude pruning and mask application.
//!
//! A mask covers only the prunable coordinates of a [`ParamSpace`], in
//! ascending flat order. Bit 1 means kept, bit 0 means pruned. Bits are
//! packed into 64-bit words (least-significant bit first) so that set
//! algebra over many masks is word-parallel.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::data::{Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::models::ModelGraph;
use crate::nncore::{seeded_rng, train_span, ParamSpace, TrainConfig, WeightVector};

/// Binary keep/prune vector over the prunable coordinates of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    words: Vec<u64>,
    len: usize,
    space: Arc<ParamSpace>,
}

impl PruneMask {
    fn word_count(len: usize) -> usize {
        len.div_ceil(64)
    }

    /// Mask of the valid bits in the final storage word.
    fn tail_mask(len: usize) -> u64 {
        match len % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }

    fn check_space(space: &ParamSpace) -> Result<()> {
        if space.d_prunable() == 0 {
            return Err(Error::usage(
                "the parameter space has no prunable coordinates",
            ));
        }
        Ok(())
    }

    /// Everything kept.
    pub fn all_ones(space: Arc<ParamSpace>) -> Result<PruneMask> {
        Self::check_space(&space)?;
        let len = space.d_prunable();
        let mut words = vec![u64::MAX; Self::word_count(len)];
        *words.last_mut().unwrap() &= Self::tail_mask(len);
        Ok(PruneMask { words, len, space })
    }

    /// Everything pruned.
    pub fn all_zeros(space: Arc<ParamSpace>) -> Result<PruneMask> {
        Self::check_space(&space)?;
        let len = space.d_prunable();
        Ok(PruneMask {
            words: vec![0; Self::word_count(len)],
            len,
            space,
        })
    }

    pub fn from_bits(space: Arc<ParamSpace>, bits: &[bool]) -> Result<PruneMask> {
        if bits.len() != space.d_prunable() {
            return Err(Error::alignment(format!(
                "{} bits for a space with {} prunable coordinates",
                bits.len(),
                space.d_prunable()
            )));
        }
        let mut mask = PruneMask::all_zeros(space)?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                mask.set(i, true);
            }
        }
        Ok(mask)
    }

    /// Rebuilds a mask from packed words (LSB-first within each word,
    /// ascending flat index). Bits beyond `d_prunable` must be zero.
    pub fn from_words(space: Arc<ParamSpace>, words: Vec<u64>) -> Result<PruneMask> {
        Self::check_space(&space)?;
        let len = space.d_prunable();
        if words.len() != Self::word_count(len) {
            return Err(Error::alignment(format!(
                "{} words for {} prunable coordinates",
                words.len(),
                len
            )));
        }
        if words.last().unwrap() & !Self::tail_mask(len) != 0 {
            return Err(Error::corruption("mask payload has bits beyond its length"));
        }
        Ok(PruneMask { words, len, space })
    }

    /// Number of prunable coordinates covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        if value {
            self.words[i / 64] |= 1u64 << (i % 64);
        } else {
            self.words[i / 64] &= !(1u64 << (i % 64));
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Kept-coordinate count.
    pub fn ones_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Pruned-coordinate count.
    pub fn zeros_count(&self) -> usize {
        self.len - self.ones_count()
    }

    /// Fraction of prunable coordinates pruned.
    pub fn sparsity(&self) -> f64 {
        self.zeros_count() as f64 / self.len as f64
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<ParamSpace> {
        Arc::clone(&self.space)
    }
}

/// The number of coordinates pruned at sparsity `s` over `d` prunable
/// coordinates: `floor(s * d)`, never more than requested.
pub fn pruned_count(sparsity: f64, d_prunable: usize) -> usize {
    ((sparsity * d_prunable as f64).floor() as usize).min(d_prunable)
}

/// One-shot global magnitude pruning: zeroes the `floor(s * d)` prunable
/// weights with the lowest magnitudes in a single pass. Ties are broken by
/// pruning the lower flat index first, so the result is deterministic.
pub fn magnitude_prune(weights: &WeightVector, sparsity: f64) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::domain(format!(
            "sparsity {sparsity} outside [0, 1]"
        )));
    }
    if !weights.is_finite() {
        return Err(Error::numeric("weights contain non-finite values"));
    }
    let space = weights.space_arc();
    let d = space.d_prunable();
    let mut mask = PruneMask::all_ones(Arc::clone(&space))?;
    let p = pruned_count(sparsity, d);
    if p == 0 {
        return Ok(mask);
    }

    let mut magnitudes = vec![0.0f64; d];
    for seg in space.prunable_segments() {
        for i in 0..seg.len {
            magnitudes[seg.prunable_offset + i] = weights.values()[seg.flat_offset + i].abs();
        }
    }
    let mut order: Vec<u32> = (0..d as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        magnitudes[a as usize]
            .total_cmp(&magnitudes[b as usize])
            .then(a.cmp(&b))
    });
    for &i in &order[..p] {
        mask.set(i as usize, false);
    }
    Ok(mask)
}

/// Zeroes the pruned prunable coordinates of `weights`; all other
/// coordinates pass through unchanged. Idempotent.
pub fn apply_mask(weights: &WeightVector, mask: &PruneMask) -> Result<WeightVector> {
    if !mask.space().same_layout(weights.space()) {
        return Err(Error::alignment(
            "mask and weights live in different parameter spaces",
        ));
    }
    let mut out = weights.clone();
    for seg in mask.space().prunable_segments() {
        for i in 0..seg.len {
            if !mask.bit(seg.prunable_offset + i) {
                out.values_mut()[seg.flat_offset + i] = 0.0;
            }
        }
    }
    Ok(out)
}

/// The shuffled-mask baseline: permutes the bits uniformly within each
/// layer's range, preserving every per-layer zero count (and therefore the
/// per-layer and global sparsities) exactly. Deterministic in `seed`.
pub fn random_ticket(mask: &PruneMask, seed: u64) -> PruneMask {
    let mut rng = seeded_rng(seed, "random_ticket");
    let mut out = mask.clone();
    for seg in mask.space().prunable_segments() {
        let mut bits: Vec<bool> = (0..seg.len)
            .map(|i| mask.bit(seg.prunable_offset + i))
            .collect();
        bits.shuffle(&mut rng);
        for (i, b) in bits.into_iter().enumerate() {
            out.set(seg.prunable_offset + i, b);
        }
    }
    out
}

/// Trains the subnetwork selected by `mask` for the full budget of
/// `config`, pinning pruned coordinates (and their momentum) to zero at
/// every iteration. A zero budget returns the masked start weights.
pub fn train_masked(
    graph: &ModelGraph,
    start_weights: &WeightVector,
    mask: &PruneMask,
    config: &TrainConfig,
    noise: &NoiseSpec,
    dataset: &Dataset,
) -> Result<WeightVector> {
    if !start_weights.space().same_layout(graph.space()) {
        return Err(Error::alignment(
            "start weights are not aligned to the model",
        ));
    }
    let mut weights = apply_mask(start_weights, mask)?;
    if config.total_iters == 0 {
        return Ok(weights);
    }
    let mut velocity = WeightVector::zeros(graph.space_arc());
    train_span(
        graph,
        &mut weights,
        &mut velocity,
        config,
        noise,
        dataset,
        0..config.total_iters,
        Some(mask),
    )?;
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_spirals;
    use crate::models::{build_model, init_weights, Arch};
    use crate::nncore::ParamLayer;

    fn flat_space(d: usize) -> Arc<ParamSpace> {
        Arc::new(
            ParamSpace::from_layers(vec![ParamLayer {
                name: "w".into(),
                shape: vec![d],
                offset: 0,
                prunable: true,
            }])
            .unwrap(),
        )
    }

    fn vector(space: &Arc<ParamSpace>, values: &[f64]) -> WeightVector {
        WeightVector::from_values(Arc::clone(space), values.to_vec()).unwrap()
    }

    #[test]
    fn sparsity_zero_keeps_everything() {
        let space = flat_space(5);
        let w = vector(&space, &[1.0, -2.0, 0.5, 0.0, 3.0]);
        let mask = magnitude_prune(&w, 0.0).unwrap();
        assert_eq!(mask.zeros_count(), 0);
        assert_eq!(mask.sparsity(), 0.0);
    }

    #[test]
    fn sparsity_one_prunes_everything() {
        let space = flat_space(5);
        let w = vector(&space, &[1.0, -2.0, 0.5, 0.0, 3.0]);
        let mask = magnitude_prune(&w, 1.0).unwrap();
        assert_eq!(mask.zeros_count(), 5);
        assert_eq!(mask.sparsity(), 1.0);
    }

    #[test]
    fn lowest_magnitudes_are_pruned() {
        let space = flat_space(4);
        let w = vector(&space, &[0.5, -0.1, 0.3, -0.9]);
        let mask = magnitude_prune(&w, 0.5).unwrap();
        let bits: Vec<bool> = (0..4).map(|i| mask.bit(i)).collect();
        assert_eq!(bits, vec![true, false, false, true]);
    }

    #[test]
    fn ties_prune_the_lower_flat_index_first() {
        let space = flat_space(4);
        let w = vector(&space, &[0.2, 0.2, 0.5, 0.7]);
        let mask = magnitude_prune(&w, 0.25).unwrap();
        let bits: Vec<bool> = (0..4).map(|i| mask.bit(i)).collect();
        assert_eq!(bits, vec![false, true, true, true]);
    }

    #[test]
    fn pruned_count_is_exactly_floor_s_times_d() {
        let graph = build_model(Arch::Mlp, &[2], 2, 16).unwrap();
        let w = init_weights(&graph, 9);
        let d = graph.space().d_prunable();
        for s in [0.0, 0.1, 0.25, 0.333, 0.5, 0.77, 0.95, 1.0] {
            let mask = magnitude_prune(&w, s).unwrap();
            assert_eq!(mask.zeros_count(), pruned_count(s, d), "s = {s}");
        }
    }

    #[test]
    fn kept_magnitudes_dominate_pruned_magnitudes() {
        let graph = build_model(Arch::Mlp, &[2], 2, 16).unwrap();
        let w = init_weights(&graph, 10);
        let mask = magnitude_prune(&w, 0.4).unwrap();
        let mut min_kept = f64::INFINITY;
        let mut max_pruned: f64 = 0.0;
        for seg in graph.space().prunable_segments() {
            for i in 0..seg.len {
                let mag = w.values()[seg.flat_offset + i].abs();
                if mask.bit(seg.prunable_offset + i) {
                    min_kept = min_kept.min(mag);
                } else {
                    max_pruned = max_pruned.max(mag);
                }
            }
        }
        assert!(min_kept >= max_pruned);
    }

    #[test]
    fn out_of_range_sparsity_is_a_domain_error() {
        let space = flat_space(3);
        let w = vector(&space, &[1.0, 2.0, 3.0]);
        assert!(matches!(magnitude_prune(&w, -0.1), Err(Error::Domain(_))));
        assert!(matches!(magnitude_prune(&w, 1.1), Err(Error::Domain(_))));
    }

    #[test]
    fn apply_mask_zeroes_exactly_the_pruned_bits() {
        let graph = build_model(Arch::Mlp, &[3], 2, 4).unwrap();
        let w = init_weights(&graph, 4);
        let mask = magnitude_prune(&w, 0.5).unwrap();
        let masked = apply_mask(&w, &mask).unwrap();
        // Element-by-element oracle over the whole vector.
        let mut prunable_seen = 0;
        for seg in graph.space().prunable_segments() {
            for i in 0..seg.len {
                let flat = seg.flat_offset + i;
                if mask.bit(seg.prunable_offset + i) {
                    assert_eq!(masked.values()[flat], w.values()[flat]);
                } else {
                    assert_eq!(masked.values()[flat], 0.0);
                }
                prunable_seen += 1;
            }
        }
        assert_eq!(prunable_seen, graph.space().d_prunable());
        // Non-prunable coordinates untouched.
        for layer in graph.space().layers().iter().filter(|l| !l.prunable) {
            for i in layer.offset..layer.offset + layer.len() {
                assert_eq!(masked.values()[i], w.values()[i]);
            }
        }
    }

    #[test]
    fn apply_mask_is_idempotent_and_identity_on_all_ones() {
        let graph = build_model(Arch::Mlp, &[3], 2, 4).unwrap();
        let w = init_weights(&graph, 5);
        let ones = PruneMask::all_ones(graph.space_arc()).unwrap();
        assert_eq!(apply_mask(&w, &ones).unwrap().values(), w.values());
        let mask = magnitude_prune(&w, 0.7).unwrap();
        let once = apply_mask(&w, &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn random_ticket_preserves_per_layer_zero_counts() {
        let graph = build_model(Arch::Mlp, &[2], 2, 32).unwrap();
        let w = init_weights(&graph, 6);
        for s in [0.2, 0.5, 0.8] {
            let mask = magnitude_prune(&w, s).unwrap();
            let shuffled = random_ticket(&mask, 3);
            for seg in graph.space().prunable_segments() {
                let zeros = |m: &PruneMask| {
                    (0..seg.len)
                        .filter(|&i| !m.bit(seg.prunable_offset + i))
                        .count()
                };
                assert_eq!(zeros(&mask), zeros(&shuffled));
            }
            assert_eq!(mask.zeros_count(), shuffled.zeros_count());
        }
    }

    #[test]
    fn random_ticket_actually_moves_bits() {
        let graph = build_model(Arch::Mlp, &[2], 2, 32).unwrap();
        let w = init_weights(&graph, 6);
        let mask = magnitude_prune(&w, 0.5).unwrap();
        assert_eq!(mask.len(), 1152);
        let shuffled = random_ticket(&mask, 3);
        assert_ne!(mask, shuffled);
        // Deterministic in the seed.
        assert_eq!(shuffled, random_ticket(&mask, 3));
    }

    #[test]
    fn fully_pruned_layer_is_unchanged_by_the_shuffle() {
        let space = flat_space(64);
        let mask = PruneMask::all_zeros(Arc::clone(&space)).unwrap();
        let shuffled = random_ticket(&mask, 1);
        assert_eq!(mask, shuffled);
    }

    #[test]
    fn zero_budget_masked_training_returns_masked_start() {
        let graph = build_model(Arch::Mlp, &[2], 2, 8).unwrap();
        let w = init_weights(&graph, 7);
        let mask = magnitude_prune(&w, 0.5).unwrap();
        let pair = gen_spirals(8, 0.0, 1).unwrap();
        let cfg = TrainConfig {
            total_iters: 0,
            batch_size: 4,
            learning_rate: 0.1,
            momentum: 0.9,
            lr_drops: Vec::new(),
        };
        let noise = NoiseSpec {
            data_order_seed: 1,
            augment_seed: 2,
            augment_strength: 0.0,
        };
        let out = train_masked(&graph, &w, &mask, &cfg, &noise, &pair.train).unwrap();
        assert_eq!(out.values(), apply_mask(&w, &mask).unwrap().values());
    }

    #[test]
    fn all_ones_mask_reproduces_unmasked_training() {
        let graph = build_model(Arch::Mlp, &[2], 2, 8).unwrap();
        let w = init_weights(&graph, 8);
        let pair = gen_spirals(16, 0.02, 2).unwrap();
        let cfg = TrainConfig::desk_default(25);
        let noise = NoiseSpec {
            data_order_seed: 3,
            augment_seed: 4,
            augment_strength: 0.01,
        };
        let ones = PruneMask::all_ones(graph.space_arc()).unwrap();
        let masked = train_masked(&graph, &w, &ones, &cfg, &noise, &pair.train).unwrap();

        let mut plain = w.clone();
        let mut velocity = WeightVector::zeros(graph.space_arc());
        train_span(&graph, &mut plain, &mut velocity, &cfg, &noise, &pair.train, 0..25, None)
            .unwrap();
        assert_eq!(masked.values(), plain.values());
    }

    #[test]
    fn masked_coordinates_stay_zero_at_every_iteration() {
        let graph = build_model(Arch::Mlp, &[2], 2, 8).unwrap();
        let w = init_weights(&graph, 9);
        let mask = magnitude_prune(&w, 0.6).unwrap();
        let pair = gen_spirals(16, 0.02, 3).unwrap();
        let noise = NoiseSpec {
            data_order_seed: 5,
            augment_seed: 6,
            augment_strength: 0.01,
        };
        // Closure holds at every prefix of the trajectory.
        for t in 0..12 {
            let cfg = TrainConfig::desk_default(t);
            let out = train_masked(&graph, &w, &mask, &cfg, &noise, &pair.train).unwrap();
            for seg in graph.space().prunable_segments() {
                for i in 0..seg.len {
                    if !mask.bit(seg.prunable_offset + i) {
                        assert_eq!(out.values()[seg.flat_offset + i], 0.0, "iteration {t}");
                    }
                }
            }
        }
    }
}

//! Forward and backward passes.
//!
//! Gradients are computed layer by layer in closed form, examples are
//! processed in ascending batch order, and every inner reduction runs
//! sequentially over ascending indices. Loss is mean softmax cross-entropy
//! with the log-sum-exp stabilization.

use crate::error::{Error, Result};
use crate::models::{ModelGraph, Op, ParamRef};
use crate::nncore::{Batch, ParamSpace, WeightVector};

fn param<'a>(space: &ParamSpace, values: &'a [f64], r: ParamRef) -> &'a [f64] {
    let layer = &space.layers()[r.0];
    &values[layer.offset..layer.offset + layer.len()]
}

fn param_mut<'a>(space: &ParamSpace, values: &'a mut [f64], r: ParamRef) -> &'a mut [f64] {
    let layer = &space.layers()[r.0];
    &mut values[layer.offset..layer.offset + layer.len()]
}

fn apply_op(op: &Op, space: &ParamSpace, w: &[f64], x: &[f64], skips: &mut Vec<Vec<f64>>) -> Vec<f64> {
    match op {
        Op::Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        } => {
            let wm = param(space, w, *weight);
            let bv = param(space, w, *bias);
            let mut y = vec![0.0; *out_dim];
            for o in 0..*out_dim {
                let row = &wm[o * in_dim..(o + 1) * in_dim];
                let mut acc = bv[o];
                for i in 0..*in_dim {
                    acc += row[i] * x[i];
                }
                y[o] = acc;
            }
            y
        }
        Op::Conv3x3 {
            weight,
            bias,
            in_ch,
            out_ch,
            height,
            width,
        } => {
            let (h, wd) = (*height, *width);
            let kernel = param(space, w, *weight);
            let bv = param(space, w, *bias);
            let mut y = vec![0.0; out_ch * h * wd];
            for oc in 0..*out_ch {
                for i in 0..h {
                    for j in 0..wd {
                        let mut acc = bv[oc];
                        for ic in 0..*in_ch {
                            for di in 0..3usize {
                                let si = i + di;
                                if si < 1 || si > h {
                                    continue;
                                }
                                let si = si - 1;
                                for dj in 0..3usize {
                                    let sj = j + dj;
                                    if sj < 1 || sj > wd {
                                        continue;
                                    }
                                    let sj = sj - 1;
                                    acc += kernel[((oc * in_ch + ic) * 3 + di) * 3 + dj]
                                        * x[(ic * h + si) * wd + sj];
                                }
                            }
                        }
                        y[(oc * h + i) * wd + j] = acc;
                    }
                }
            }
            y
        }
        Op::ChannelAffine {
            scale,
            shift,
            channels,
            spatial,
        } => {
            let sc = param(space, w, *scale);
            let sh = param(space, w, *shift);
            let mut y = vec![0.0; channels * spatial];
            for c in 0..*channels {
                for p in 0..*spatial {
                    y[c * spatial + p] = sc[c] * x[c * spatial + p] + sh[c];
                }
            }
            y
        }
        Op::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        Op::GlobalAvgPool { channels, spatial } => {
            let mut y = vec![0.0; *channels];
            for c in 0..*channels {
                let mut acc = 0.0;
                for p in 0..*spatial {
                    acc += x[c * spatial + p];
                }
                y[c] = acc / *spatial as f64;
            }
            y
        }
        Op::SkipSave => {
            skips.push(x.to_vec());
            x.to_vec()
        }
        Op::SkipAdd => {
            let saved = skips.pop().expect("SkipAdd without a matching SkipSave");
            x.iter().zip(saved.iter()).map(|(a, b)| a + b).collect()
        }
    }
}

/// Forward pass for one example, keeping each op's input for the backward
/// sweep.
fn forward_traced(graph: &ModelGraph, w: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let space = graph.space();
    let mut inputs = Vec::with_capacity(graph.ops().len());
    let mut act = x.to_vec();
    let mut skips: Vec<Vec<f64>> = Vec::new();
    for op in graph.ops() {
        inputs.push(act.clone());
        act = apply_op(op, space, w, &act, &mut skips);
    }
    (inputs, act)
}

/// Forward pass without a trace; used for evaluation.
pub fn forward_logits(graph: &ModelGraph, weights: &WeightVector, x: &[f64]) -> Vec<f64> {
    let space = graph.space();
    let mut act = x.to_vec();
    let mut skips: Vec<Vec<f64>> = Vec::new();
    for op in graph.ops() {
        act = apply_op(op, space, weights.values(), &act, &mut skips);
    }
    act
}

fn backward_traced(
    graph: &ModelGraph,
    w: &[f64],
    inputs: &[Vec<f64>],
    dlogits: Vec<f64>,
    grad: &mut [f64],
) {
    let space = graph.space();
    let mut dy = dlogits;
    let mut skip_grads: Vec<Vec<f64>> = Vec::new();
    for (op, x) in graph.ops().iter().zip(inputs.iter()).rev() {
        dy = match op {
            Op::Dense {
                weight,
                bias,
                in_dim,
                out_dim,
            } => {
                let mut dx = vec![0.0; *in_dim];
                {
                    let dwm = param_mut(space, grad, *weight);
                    for o in 0..*out_dim {
                        let g = dy[o];
                        let row = &mut dwm[o * in_dim..(o + 1) * in_dim];
                        for i in 0..*in_dim {
                            row[i] += g * x[i];
                        }
                    }
                }
                {
                    let dbv = param_mut(space, grad, *bias);
                    for o in 0..*out_dim {
                        dbv[o] += dy[o];
                    }
                }
                let wm = param(space, w, *weight);
                for o in 0..*out_dim {
                    let g = dy[o];
                    let row = &wm[o * in_dim..(o + 1) * in_dim];
                    for i in 0..*in_dim {
                        dx[i] += row[i] * g;
                    }
                }
                dx
            }
            Op::Conv3x3 {
                weight,
                bias,
                in_ch,
                out_ch,
                height,
                width,
            } => {
                let (h, wd) = (*height, *width);
                let mut dx = vec![0.0; in_ch * h * wd];
                let kernel = param(space, w, *weight);
                for oc in 0..*out_ch {
                    for i in 0..h {
                        for j in 0..wd {
                            let g = dy[(oc * h + i) * wd + j];
                            for ic in 0..*in_ch {
                                for di in 0..3usize {
                                    let si = i + di;
                                    if si < 1 || si > h {
                                        continue;
                                    }
                                    let si = si - 1;
                                    for dj in 0..3usize {
                                        let sj = j + dj;
                                        if sj < 1 || sj > wd {
                                            continue;
                                        }
                                        let sj = sj - 1;
                                        let k = ((oc * in_ch + ic) * 3 + di) * 3 + dj;
                                        dx[(ic * h + si) * wd + sj] += kernel[k] * g;
                                    }
                                }
                            }
                        }
                    }
                }
                {
                    let dkernel = param_mut(space, grad, *weight);
                    for oc in 0..*out_ch {
                        for i in 0..h {
                            for j in 0..wd {
                                let g = dy[(oc * h + i) * wd + j];
                                for ic in 0..*in_ch {
                                    for di in 0..3usize {
                                        let si = i + di;
                                        if si < 1 || si > h {
                                            continue;
                                        }
                                        let si = si - 1;
                                        for dj in 0..3usize {
                                            let sj = j + dj;
                                            if sj < 1 || sj > wd {
                                                continue;
                                            }
                                            let sj = sj - 1;
                                            dkernel[((oc * in_ch + ic) * 3 + di) * 3 + dj] +=
                                                g * x[(ic * h + si) * wd + sj];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                {
                    let dbv = param_mut(space, grad, *bias);
                    for oc in 0..*out_ch {
                        let mut acc = 0.0;
                        for i in 0..h {
                            for j in 0..wd {
                                acc += dy[(oc * h + i) * wd + j];
                            }
                        }
                        dbv[oc] += acc;
                    }
                }
                dx
            }
            Op::ChannelAffine {
                scale,
                shift,
                channels,
                spatial,
            } => {
                let sc = param(space, w, *scale).to_vec();
                let mut dx = vec![0.0; channels * spatial];
                {
                    let dsc = param_mut(space, grad, *scale);
                    for c in 0..*channels {
                        let mut acc = 0.0;
                        for p in 0..*spatial {
                            acc += dy[c * spatial + p] * x[c * spatial + p];
                        }
                        dsc[c] += acc;
                    }
                }
                {
                    let dsh = param_mut(space, grad, *shift);
                    for c in 0..*channels {
                        let mut acc = 0.0;
                        for p in 0..*spatial {
                            acc += dy[c * spatial + p];
                        }
                        dsh[c] += acc;
                    }
                }
                for c in 0..*channels {
                    for p in 0..*spatial {
                        dx[c * spatial + p] = dy[c * spatial + p] * sc[c];
                    }
                }
                dx
            }
            Op::Relu => x
                .iter()
                .zip(dy.iter())
                .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
                .collect(),
            Op::GlobalAvgPool { channels, spatial } => {
                let mut dx = vec![0.0; channels * spatial];
                for c in 0..*channels {
                    let g = dy[c] / *spatial as f64;
                    for p in 0..*spatial {
                        dx[c * spatial + p] = g;
                    }
                }
                dx
            }
            Op::SkipAdd => {
                // The saved branch receives the same upstream gradient.
                skip_grads.push(dy.clone());
                dy
            }
            Op::SkipSave => {
                let g = skip_grads.pop().expect("SkipSave without a matching SkipAdd");
                dy.iter().zip(g.iter()).map(|(a, b)| a + b).collect()
            }
        };
    }
}

/// Softmax cross-entropy of one logit vector against a class index,
/// via log-sum-exp. Returns the loss and d(loss)/d(logits).
fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut max = f64::NEG_INFINITY;
    for &z in logits {
        if z > max {
            max = z;
        }
    }
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - max).exp();
    }
    let lse = max + sum.ln();
    let loss = lse - logits[label];
    let mut dz: Vec<f64> = logits.iter().map(|&z| (z - lse).exp()).collect();
    dz[label] -= 1.0;
    (loss, dz)
}

/// Mean softmax cross-entropy over the batch plus its exact gradient.
pub fn loss_and_grad(
    graph: &ModelGraph,
    weights: &WeightVector,
    batch: &Batch,
) -> Result<(f64, WeightVector)> {
    if !weights.space().same_layout(graph.space()) {
        return Err(Error::alignment(
            "weights are not aligned to the model's parameter space",
        ));
    }
    if batch.is_empty() {
        return Err(Error::alignment("batch is empty"));
    }
    if batch.inputs.shape()[1..] != *graph.input_dims() {
        return Err(Error::alignment(format!(
            "batch example shape {:?} does not match model input {:?}",
            &batch.inputs.shape()[1..],
            graph.input_dims()
        )));
    }
    for (i, &label) in batch.labels.iter().enumerate() {
        if label >= graph.class_count() {
            return Err(Error::alignment(format!(
                "label {label} of example {i} exceeds class count {}",
                graph.class_count()
            )));
        }
    }

    let n = batch.len();
    let mut grad = vec![0.0; graph.space().d_total()];
    let mut total_loss = 0.0;
    for e in 0..n {
        let x = batch.inputs.row(e);
        let (inputs, logits) = forward_traced(graph, weights.values(), x);
        let (loss, dlogits) = softmax_cross_entropy(&logits, batch.labels[e]);
        total_loss += loss;
        backward_traced(graph, weights.values(), &inputs, dlogits, &mut grad);
    }
    let loss = total_loss / n as f64;
    for g in &mut grad {
        *g /= n as f64;
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite loss or gradient"));
    }
    let grad = WeightVector::from_values(graph.space_arc(), grad)?;
    Ok((loss, grad))
}

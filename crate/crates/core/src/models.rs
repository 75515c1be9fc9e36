//! Model builders.
//!
//! Each builder produces a forward graph plus a [`ParamSpace`] whose weight
//! matrices and convolution kernels are marked prunable. Biases and
//! per-channel affine parameters are never prunable and never counted in
//! the sparsity denominator.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nncore::{seeded_rng, ParamLayer, ParamSpace, WeightVector};

/// Architecture id. These strings appear in plan manifests and CLI flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Mlp,
    Microconv,
    Microresnet,
}

impl Arch {
    pub fn from_id(id: &str) -> Result<Arch> {
        match id {
            "mlp" => Ok(Arch::Mlp),
            "microconv" => Ok(Arch::Microconv),
            "microresnet" => Ok(Arch::Microresnet),
            other => Err(Error::config(format!(
                "unknown architecture id {other:?} (expected mlp, microconv or microresnet)"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::Microconv => "microconv",
            Arch::Microresnet => "microresnet",
        }
    }
}

/// Reference to one entry of the model's [`ParamSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef(pub usize);

/// One step of the forward graph. Spatial dimensions are fixed at build
/// time; all convolutions are 3x3, stride 1, zero-padded by 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Dense {
        weight: ParamRef,
        bias: ParamRef,
        in_dim: usize,
        out_dim: usize,
    },
    Conv3x3 {
        weight: ParamRef,
        bias: ParamRef,
        in_ch: usize,
        out_ch: usize,
        height: usize,
        width: usize,
    },
    /// Per-channel affine scaling without batch statistics.
    ChannelAffine {
        scale: ParamRef,
        shift: ParamRef,
        channels: usize,
        spatial: usize,
    },
    Relu,
    GlobalAvgPool {
        channels: usize,
        spatial: usize,
    },
    /// Saves the current activation for a later identity skip.
    SkipSave,
    /// Adds the most recently saved activation back in.
    SkipAdd,
}

/// A built model: forward ops plus the parameter layout they index into.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    arch: Arch,
    ops: Vec<Op>,
    input_dims: Vec<usize>,
    class_count: usize,
    width: usize,
    space: Arc<ParamSpace>,
}

impl ModelGraph {
    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<ParamSpace> {
        Arc::clone(&self.space)
    }
}

struct GraphBuilder {
    layers: Vec<ParamLayer>,
    ops: Vec<Op>,
    offset: usize,
}

impl GraphBuilder {
    fn new() -> GraphBuilder {
        GraphBuilder {
            layers: Vec::new(),
            ops: Vec::new(),
            offset: 0,
        }
    }

    fn param(&mut self, name: &str, shape: &[usize], prunable: bool) -> ParamRef {
        let layer = ParamLayer {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.offset,
            prunable,
        };
        self.offset += layer.len();
        self.layers.push(layer);
        ParamRef(self.layers.len() - 1)
    }

    fn dense(&mut self, name: &str, in_dim: usize, out_dim: usize) {
        let weight = self.param(&format!("{name}.weight"), &[out_dim, in_dim], true);
        let bias = self.param(&format!("{name}.bias"), &[out_dim], false);
        self.ops.push(Op::Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        });
    }

    fn conv3x3(&mut self, name: &str, in_ch: usize, out_ch: usize, height: usize, width: usize) {
        let weight = self.param(&format!("{name}.weight"), &[out_ch, in_ch, 3, 3], true);
        let bias = self.param(&format!("{name}.bias"), &[out_ch], false);
        self.ops.push(Op::Conv3x3 {
            weight,
            bias,
            in_ch,
            out_ch,
            height,
            width,
        });
    }

    fn channel_affine(&mut self, name: &str, channels: usize, spatial: usize) {
        let scale = self.param(&format!("{name}.scale"), &[channels], false);
        let shift = self.param(&format!("{name}.shift"), &[channels], false);
        self.ops.push(Op::ChannelAffine {
            scale,
            shift,
            channels,
            spatial,
        });
    }
}

/// Builds the requested architecture. The prunable set covers exactly the
/// weight matrices and convolution kernels.
pub fn build_model(
    arch: Arch,
    input_dims: &[usize],
    class_count: usize,
    width: usize,
) -> Result<ModelGraph> {
    if width < 1 {
        return Err(Error::config("width must be at least 1"));
    }
    if class_count < 1 {
        return Err(Error::config("class_count must be at least 1"));
    }
    if input_dims.is_empty() || input_dims.iter().any(|&d| d == 0) {
        return Err(Error::config(format!(
            "input dimensions must be positive, got {input_dims:?}"
        )));
    }

    let mut b = GraphBuilder::new();
    match arch {
        Arch::Mlp => {
            let in_dim: usize = input_dims.iter().product();
            b.dense("fc1", in_dim, width);
            b.ops.push(Op::Relu);
            b.dense("fc2", width, width);
            b.ops.push(Op::Relu);
            b.dense("fc3", width, class_count);
        }
        Arch::Microconv => {
            let (c, h, w) = image_dims(arch, input_dims)?;
            b.conv3x3("conv1", c, width, h, w);
            b.ops.push(Op::Relu);
            b.conv3x3("conv2", width, width, h, w);
            b.ops.push(Op::Relu);
            b.ops.push(Op::GlobalAvgPool {
                channels: width,
                spatial: h * w,
            });
            b.dense("head", width, class_count);
        }
        Arch::Microresnet => {
            build_microresnet(&mut b, input_dims, class_count, width, true)?;
        }
    }

    let space = Arc::new(ParamSpace::from_layers(b.layers)?);
    Ok(ModelGraph {
        arch,
        ops: b.ops,
        input_dims: input_dims.to_vec(),
        class_count,
        width,
        space,
    })
}

/// Conv stem, two residual blocks (two 3x3 convs each behind an identity
/// skip), pooled linear head. The skips carry no parameters, so ablating
/// them changes the graph but not the parameter count.
fn build_microresnet(
    b: &mut GraphBuilder,
    input_dims: &[usize],
    class_count: usize,
    width: usize,
    skips: bool,
) -> Result<()> {
    let (c, h, w) = image_dims(Arch::Microresnet, input_dims)?;
    let spatial = h * w;
    b.conv3x3("stem", c, width, h, w);
    b.channel_affine("stem_norm", width, spatial);
    b.ops.push(Op::Relu);
    for block in 1..=2 {
        if skips {
            b.ops.push(Op::SkipSave);
        }
        b.conv3x3(&format!("block{block}.conv1"), width, width, h, w);
        b.channel_affine(&format!("block{block}.norm1"), width, spatial);
        b.ops.push(Op::Relu);
        b.conv3x3(&format!("block{block}.conv2"), width, width, h, w);
        b.channel_affine(&format!("block{block}.norm2"), width, spatial);
        if skips {
            b.ops.push(Op::SkipAdd);
        }
        b.ops.push(Op::Relu);
    }
    b.ops.push(Op::GlobalAvgPool {
        channels: width,
        spatial,
    });
    b.dense("head", width, class_count);
    Ok(())
}

/// Skip-ablated variant of microresnet, used to check that the identity
/// skips contribute no parameters.
pub fn build_microresnet_ablated(
    input_dims: &[usize],
    class_count: usize,
    width: usize,
) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new();
    build_microresnet(&mut b, input_dims, class_count, width, false)?;
    let space = Arc::new(ParamSpace::from_layers(b.layers)?);
    Ok(ModelGraph {
        arch: Arch::Microresnet,
        ops: b.ops,
        input_dims: input_dims.to_vec(),
        class_count,
        width,
        space,
    })
}

fn image_dims(arch: Arch, input_dims: &[usize]) -> Result<(usize, usize, usize)> {
    match input_dims {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::config(format!(
            "{} expects channels-height-width input dimensions, got {other:?}",
            arch.id()
        ))),
    }
}

/// Seeded initialization: fan-in-scaled normal weights (std `sqrt(2 / fan_in)`),
/// zero biases, unit scales, zero shifts. Deterministic in `seed`.
pub fn init_weights(graph: &ModelGraph, seed: u64) -> WeightVector {
    let space = graph.space();
    let mut values = vec![0.0; space.d_total()];
    let mut rng = seeded_rng(seed, "init");
    for op in graph.ops() {
        match op {
            Op::Dense {
                weight,
                bias,
                in_dim,
                ..
            } => {
                fill_normal(&mut values, space, *weight, *in_dim, &mut rng);
                fill_const(&mut values, space, *bias, 0.0);
            }
            Op::Conv3x3 {
                weight,
                bias,
                in_ch,
                ..
            } => {
                fill_normal(&mut values, space, *weight, in_ch * 9, &mut rng);
                fill_const(&mut values, space, *bias, 0.0);
            }
            Op::ChannelAffine { scale, shift, .. } => {
                fill_const(&mut values, space, *scale, 1.0);
                fill_const(&mut values, space, *shift, 0.0);
            }
            _ => {}
        }
    }
    WeightVector::from_values(graph.space_arc(), values).expect("init matches its own space")
}

fn fill_normal(
    values: &mut [f64],
    space: &ParamSpace,
    param: ParamRef,
    fan_in: usize,
    rng: &mut impl Rng,
) {
    let layer = &space.layers()[param.0];
    let std = (2.0 / fan_in as f64).sqrt();
    for v in &mut values[layer.offset..layer.offset + layer.len()] {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * std;
    }
}

fn fill_const(values: &mut [f64], space: &ParamSpace, param: ParamRef, value: f64) {
    let layer = &space.layers()[param.0];
    for v in &mut values[layer.offset..layer.offset + layer.len()] {
        *v = value;
    }
}

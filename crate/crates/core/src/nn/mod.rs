//! Deterministic CPU tensor engine.
//!
//! Networks are static DAGs of [`Node`]s in topological order. Every layer
//! family has a forward and a backward pass at 64-bit precision, and a
//! network is shape-checked end to end before anything executes. The hybrid
//! topology used in this crate produces two heads from a shared encoder: a
//! per-pixel softmax over {background, RNFL, GC-IPL} and a scan-level
//! softmax over {healthy, glaucomatous}.

pub mod conv;
pub mod dilation;
pub mod layers;
pub mod serialize;
pub mod toy;

pub use conv::{atrous_conv_backward, atrous_conv_forward, ConvGrads, ConvKernel, Padding};
pub use dilation::{
    fixed_schedule, gridding_coverage, influence_map, make_schedule, receptive_field,
    DilationSchedule,
};
pub use toy::toy_hybrid_spec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor4;

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Graph entry point; passes the network input through.
    Input,
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        padding: Padding,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    AvgPool {
        size: usize,
        stride: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    /// Softmax over the channel axis at every spatial position.
    Softmax,
    ZeroPad {
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    },
    /// Bilinear resize by an integer factor (lambda layer).
    Upsample {
        factor: usize,
    },
    /// Multiply by a constant (lambda layer).
    Scale {
        factor: f64,
    },
    /// Channel-axis concatenation of all inputs.
    Concat,
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flatten,
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub layer: LayerSpec,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    /// (channels, height, width) of the single network input.
    pub input_shape: (usize, usize, usize),
    pub nodes: Vec<Node>,
    pub seg_output: usize,
    pub cls_output: usize,
}

impl NetworkSpec {
    /// Shape-check the whole graph; returns the inferred (c, h, w) per node.
    pub fn validate(&self) -> Result<Vec<(usize, usize, usize)>> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("network has no nodes"));
        }
        let input_count = self
            .nodes
            .iter()
            .filter(|n| matches!(n.layer, LayerSpec::Input))
            .count();
        if input_count != 1 {
            return Err(Error::invalid(format!(
                "network must have exactly one input node, found {input_count}"
            )));
        }
        if self.seg_output >= self.nodes.len() || self.cls_output >= self.nodes.len() {
            return Err(Error::invalid("output node index out of range"));
        }

        let mut shapes: Vec<(usize, usize, usize)> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            for &i in &node.inputs {
                if i >= idx {
                    return Err(Error::invalid(format!(
                        "node {idx} consumes node {i}; nodes must be topologically ordered"
                    )));
                }
            }
            let arity_ok = match node.layer {
                LayerSpec::Input => node.inputs.is_empty(),
                LayerSpec::Concat => node.inputs.len() >= 2,
                _ => node.inputs.len() == 1,
            };
            if !arity_ok {
                return Err(Error::invalid(format!(
                    "node {idx} ({:?}) has {} input(s)",
                    node.layer,
                    node.inputs.len()
                )));
            }
            let shape = self.infer_shape(idx, node, &shapes)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    fn infer_shape(
        &self,
        idx: usize,
        node: &Node,
        shapes: &[(usize, usize, usize)],
    ) -> Result<(usize, usize, usize)> {
        let input = |k: usize| shapes[node.inputs[k]];
        let mismatch = |msg: String| Err(Error::shape(format!("node {idx}: {msg}")));
        match node.layer {
            LayerSpec::Input => Ok(self.input_shape),
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                dilation,
                padding,
            } => {
                let (c, h, w) = input(0);
                if c != in_ch {
                    return mismatch(format!("conv expects {in_ch} channels, got {c}"));
                }
                let (oh, ow) = conv::conv_output_size(h, w, kernel, kernel, dilation, padding)?;
                Ok((out_ch, oh, ow))
            }
            LayerSpec::MaxPool { size, stride } | LayerSpec::AvgPool { size, stride } => {
                let (c, h, w) = input(0);
                let (oh, ow) = layers::pool_output_size(h, w, size, stride)?;
                Ok((c, oh, ow))
            }
            LayerSpec::BatchNorm { channels } => {
                let (c, h, w) = input(0);
                if c != channels {
                    return mismatch(format!("batch norm over {channels} channels, got {c}"));
                }
                Ok((c, h, w))
            }
            LayerSpec::Relu | LayerSpec::Softmax | LayerSpec::Scale { .. } => Ok(input(0)),
            LayerSpec::ZeroPad {
                top,
                bottom,
                left,
                right,
            } => {
                let (c, h, w) = input(0);
                Ok((c, h + top + bottom, w + left + right))
            }
            LayerSpec::Upsample { factor } => {
                if factor == 0 {
                    return mismatch("upsample factor must be positive".into());
                }
                let (c, h, w) = input(0);
                Ok((c, h * factor, w * factor))
            }
            LayerSpec::Concat => {
                let (_, h, w) = input(0);
                let mut channels = 0;
                for k in 0..node.inputs.len() {
                    let (pc, ph, pw) = input(k);
                    if ph != h || pw != w {
                        return mismatch("concat inputs disagree on spatial size".into());
                    }
                    channels += pc;
                }
                Ok((channels, h, w))
            }
            LayerSpec::Reshape {
                channels,
                height,
                width,
            } => {
                let (c, h, w) = input(0);
                if c * h * w != channels * height * width {
                    return mismatch(format!(
                        "cannot reshape {c}x{h}x{w} into {channels}x{height}x{width}"
                    ));
                }
                Ok((channels, height, width))
            }
            LayerSpec::Flatten => {
                let (c, h, w) = input(0);
                Ok((c * h * w, 1, 1))
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => {
                let (c, h, w) = input(0);
                if h != 1 || w != 1 || c != in_features {
                    return mismatch(format!(
                        "fully connected expects ({in_features},1,1), got ({c},{h},{w})"
                    ));
                }
                Ok((out_features, 1, 1))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ParameterCount {
    pub learnable: u64,
    pub non_learnable: u64,
    pub total: u64,
}

/// Count parameters of a shape-checked spec. Convolutions contribute
/// `k*k*c_in*c_out + c_out`, dense layers `in*out + out`, batch norm `2c`
/// learnable (scale, shift) plus `2c` non-learnable (running statistics);
/// every other family contributes nothing.
pub fn count_parameters(spec: &NetworkSpec) -> Result<ParameterCount> {
    spec.validate()?;
    let mut learnable = 0u64;
    let mut non_learnable = 0u64;
    for node in &spec.nodes {
        match node.layer {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                ..
            } => {
                learnable += (kernel * kernel * in_ch * out_ch + out_ch) as u64;
            }
            LayerSpec::BatchNorm { channels } => {
                learnable += 2 * channels as u64;
                non_learnable += 2 * channels as u64;
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
            } => {
                learnable += (in_features * out_features + out_features) as u64;
            }
            _ => {}
        }
    }
    Ok(ParameterCount {
        learnable,
        non_learnable,
        total: learnable + non_learnable,
    })
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ParamBlock {
    None,
    Conv(ConvKernel),
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Dense {
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub blocks: Vec<ParamBlock>,
}

impl Weights {
    /// Deterministic initialization: uniform in [-b, b] with
    /// b = sqrt(6 / (fan_in + fan_out)) for weights, zero biases, identity
    /// batch-norm with zero-mean/unit-variance running statistics.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
        spec.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(spec.nodes.len());
        for node in &spec.nodes {
            let block = match node.layer {
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    dilation,
                    ..
                } => {
                    let fan_in = (in_ch * kernel * kernel) as f64;
                    let fan_out = (out_ch * kernel * kernel) as f64;
                    let bound = (6.0 / (fan_in + fan_out)).sqrt();
                    let weight = (0..out_ch * in_ch * kernel * kernel)
                        .map(|_| rng.uniform_in(-bound, bound))
                        .collect();
                    ParamBlock::Conv(ConvKernel::new(
                        out_ch,
                        in_ch,
                        kernel,
                        kernel,
                        dilation,
                        weight,
                        vec![0.0; out_ch],
                    )?)
                }
                LayerSpec::BatchNorm { channels } => ParamBlock::BatchNorm {
                    gamma: vec![1.0; channels],
                    beta: vec![0.0; channels],
                    running_mean: vec![0.0; channels],
                    running_var: vec![1.0; channels],
                },
                LayerSpec::FullyConnected {
                    in_features,
                    out_features,
                } => {
                    let bound = (6.0 / (in_features + out_features) as f64).sqrt();
                    let weight = (0..in_features * out_features)
                        .map(|_| rng.uniform_in(-bound, bound))
                        .collect();
                    ParamBlock::Dense {
                        weight,
                        bias: vec![0.0; out_features],
                    }
                }
                _ => ParamBlock::None,
            };
            blocks.push(block);
        }
        Ok(Weights { blocks })
    }

    /// Zero-valued container of the same structure, used for gradients.
    pub fn zeros_like(&self) -> Weights {
        let blocks = self
            .blocks
            .iter()
            .map(|b| match b {
                ParamBlock::None => ParamBlock::None,
                ParamBlock::Conv(k) => ParamBlock::Conv(
                    ConvKernel::new(
                        k.out_ch,
                        k.in_ch,
                        k.kh,
                        k.kw,
                        k.dilation,
                        vec![0.0; k.weight().len()],
                        vec![0.0; k.bias().len()],
                    )
                    .expect("shapes already valid"),
                ),
                ParamBlock::BatchNorm { gamma, .. } => ParamBlock::BatchNorm {
                    gamma: vec![0.0; gamma.len()],
                    beta: vec![0.0; gamma.len()],
                    running_mean: vec![0.0; gamma.len()],
                    running_var: vec![0.0; gamma.len()],
                },
                ParamBlock::Dense { weight, bias } => ParamBlock::Dense {
                    weight: vec![0.0; weight.len()],
                    bias: vec![0.0; bias.len()],
                },
            })
            .collect();
        Weights { blocks }
    }

    /// Learnable parameter slices in a fixed order (conv weight+bias,
    /// batch-norm scale+shift, dense weight+bias). Running statistics are
    /// excluded.
    pub fn learnable(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match b {
                ParamBlock::None => {}
                ParamBlock::Conv(k) => {
                    out.push(k.weight());
                    out.push(k.bias());
                }
                ParamBlock::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                ParamBlock::Dense { weight, bias } => {
                    out.push(weight.as_slice());
                    out.push(bias.as_slice());
                }
            }
        }
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            match b {
                ParamBlock::None => {}
                ParamBlock::Conv(k) => {
                    let (w, bias) = k.parts_mut();
                    out.push(w);
                    out.push(bias);
                }
                ParamBlock::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                ParamBlock::Dense { weight, bias } => {
                    out.push(weight.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
            }
        }
        out
    }

    pub fn learnable_count(&self) -> usize {
        self.learnable().iter().map(|s| s.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// Network execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

enum Aux {
    None,
    MaxPool(Vec<u32>),
    Bn(layers::BnCache),
}

/// Cached activations from one forward pass.
pub struct ForwardPass {
    values: Vec<Tensor4>,
    aux: Vec<Aux>,
}

impl ForwardPass {
    pub fn value(&self, node: usize) -> &Tensor4 {
        &self.values[node]
    }
}

#[derive(Debug)]
pub struct Network {
    pub spec: NetworkSpec,
    pub weights: Weights,
}

impl Network {
    pub fn new(spec: NetworkSpec, weights: Weights) -> Result<Network> {
        spec.validate()?;
        if weights.blocks.len() != spec.nodes.len() {
            return Err(Error::shape(
                "weights block count does not match node count",
            ));
        }
        Ok(Network { spec, weights })
    }

    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Network> {
        let weights = Weights::init(&spec, seed)?;
        Ok(Network { spec, weights })
    }

    /// Segmentation and classification outputs of a pass.
    pub fn heads<'p>(&self, pass: &'p ForwardPass) -> (&'p Tensor4, &'p Tensor4) {
        (
            pass.value(self.spec.seg_output),
            pass.value(self.spec.cls_output),
        )
    }

    pub fn forward(&mut self, x: &Tensor4, phase: Phase) -> Result<ForwardPass> {
        let (_, c, h, w) = x.shape();
        if (c, h, w) != self.spec.input_shape {
            return Err(Error::shape(format!(
                "network input must be {:?}, got ({c},{h},{w})",
                self.spec.input_shape
            )));
        }
        let n_nodes = self.spec.nodes.len();
        let mut values: Vec<Tensor4> = Vec::with_capacity(n_nodes);
        let mut aux: Vec<Aux> = Vec::with_capacity(n_nodes);
        for idx in 0..n_nodes {
            let node = self.spec.nodes[idx].clone();
            let value = match node.layer {
                LayerSpec::Input => {
                    aux.push(Aux::None);
                    x.clone()
                }
                LayerSpec::Conv { padding, .. } => {
                    let ParamBlock::Conv(kernel) = &self.weights.blocks[idx] else {
                        return Err(Error::invalid(format!("node {idx}: missing conv weights")));
                    };
                    aux.push(Aux::None);
                    conv::atrous_conv_forward(&values[node.inputs[0]], kernel, padding)?
                }
                LayerSpec::MaxPool { size, stride } => {
                    let (out, argmax) =
                        layers::maxpool_forward(&values[node.inputs[0]], size, stride)?;
                    aux.push(Aux::MaxPool(argmax));
                    out
                }
                LayerSpec::AvgPool { size, stride } => {
                    aux.push(Aux::None);
                    layers::avgpool_forward(&values[node.inputs[0]], size, stride)?
                }
                LayerSpec::BatchNorm { .. } => {
                    let ParamBlock::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    } = &mut self.weights.blocks[idx]
                    else {
                        return Err(Error::invalid(format!(
                            "node {idx}: missing batch-norm weights"
                        )));
                    };
                    match phase {
                        Phase::Train => {
                            let (out, cache) = layers::batchnorm_forward_train(
                                &values[node.inputs[0]],
                                gamma,
                                beta,
                                running_mean,
                                running_var,
                            );
                            aux.push(Aux::Bn(cache));
                            out
                        }
                        Phase::Eval => {
                            aux.push(Aux::None);
                            layers::batchnorm_forward_eval(
                                &values[node.inputs[0]],
                                gamma,
                                beta,
                                running_mean,
                                running_var,
                            )
                        }
                    }
                }
                LayerSpec::Relu => {
                    aux.push(Aux::None);
                    layers::relu_forward(&values[node.inputs[0]])
                }
                LayerSpec::Softmax => {
                    aux.push(Aux::None);
                    layers::softmax_forward(&values[node.inputs[0]])
                }
                LayerSpec::ZeroPad {
                    top,
                    bottom,
                    left,
                    right,
                } => {
                    aux.push(Aux::None);
                    layers::zero_pad_forward(&values[node.inputs[0]], top, bottom, left, right)
                }
                LayerSpec::Upsample { factor } => {
                    aux.push(Aux::None);
                    layers::upsample_forward(&values[node.inputs[0]], factor)?
                }
                LayerSpec::Scale { factor } => {
                    aux.push(Aux::None);
                    layers::scale_forward(&values[node.inputs[0]], factor)
                }
                LayerSpec::Concat => {
                    let parts: Vec<&Tensor4> = node.inputs.iter().map(|&i| &values[i]).collect();
                    aux.push(Aux::None);
                    layers::concat_forward(&parts)?
                }
                LayerSpec::Reshape {
                    channels,
                    height,
                    width,
                } => {
                    aux.push(Aux::None);
                    values[node.inputs[0]].reshaped(channels, height, width)?
                }
                LayerSpec::Flatten => {
                    let v = &values[node.inputs[0]];
                    let (_, c, h, w) = v.shape();
                    aux.push(Aux::None);
                    v.reshaped(c * h * w, 1, 1)?
                }
                LayerSpec::FullyConnected { .. } => {
                    let ParamBlock::Dense { weight, bias } = &self.weights.blocks[idx] else {
                        return Err(Error::invalid(format!("node {idx}: missing dense weights")));
                    };
                    aux.push(Aux::None);
                    layers::fully_connected_forward(&values[node.inputs[0]], weight, bias)?
                }
            };
            values.push(value);
        }
        Ok(ForwardPass { values, aux })
    }

    /// Backpropagate head gradients through the graph; returns parameter
    /// gradients in a container structured like the weights.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        grad_seg: Option<&Tensor4>,
        grad_cls: Option<&Tensor4>,
    ) -> Result<Weights> {
        let n_nodes = self.spec.nodes.len();
        let mut grads: Vec<Option<Tensor4>> = (0..n_nodes).map(|_| None).collect();
        if let Some(g) = grad_seg {
            accumulate(&mut grads[self.spec.seg_output], g);
        }
        if let Some(g) = grad_cls {
            accumulate(&mut grads[self.spec.cls_output], g);
        }
        let mut param_grads = self.weights.zeros_like();

        for idx in (0..n_nodes).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.spec.nodes[idx];
            match node.layer {
                LayerSpec::Input => {}
                LayerSpec::Conv { padding, .. } => {
                    let ParamBlock::Conv(kernel) = &self.weights.blocks[idx] else {
                        unreachable!("validated at construction");
                    };
                    let input = &pass.values[node.inputs[0]];
                    let g = conv::atrous_conv_backward(&gout, input, kernel, padding)?;
                    accumulate(&mut grads[node.inputs[0]], &g.input);
                    let ParamBlock::Conv(gk) = &mut param_grads.blocks[idx] else {
                        unreachable!();
                    };
                    gk.add_assign(&g.weight, &g.bias);
                }
                LayerSpec::MaxPool { .. } => {
                    let Aux::MaxPool(argmax) = &pass.aux[idx] else {
                        return Err(Error::invalid("missing max-pool cache"));
                    };
                    let gin = layers::maxpool_backward(
                        &gout,
                        argmax,
                        pass.values[node.inputs[0]].shape(),
                    );
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::AvgPool { size, stride } => {
                    let gin = layers::avgpool_backward(
                        &gout,
                        size,
                        stride,
                        pass.values[node.inputs[0]].shape(),
                    );
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::BatchNorm { .. } => {
                    let Aux::Bn(cache) = &pass.aux[idx] else {
                        return Err(Error::invalid(
                            "batch-norm backward requires a training-mode forward cache",
                        ));
                    };
                    let ParamBlock::BatchNorm { gamma, .. } = &self.weights.blocks[idx] else {
                        unreachable!();
                    };
                    let (gin, dgamma, dbeta) = layers::batchnorm_backward(&gout, cache, gamma);
                    accumulate(&mut grads[node.inputs[0]], &gin);
                    let ParamBlock::BatchNorm {
                        gamma: gg,
                        beta: gb,
                        ..
                    } = &mut param_grads.blocks[idx]
                    else {
                        unreachable!();
                    };
                    for (a, b) in gg.iter_mut().zip(&dgamma) {
                        *a += b;
                    }
                    for (a, b) in gb.iter_mut().zip(&dbeta) {
                        *a += b;
                    }
                }
                LayerSpec::Relu => {
                    let gin = layers::relu_backward(&gout, &pass.values[node.inputs[0]]);
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::Softmax => {
                    let gin = layers::softmax_backward(&gout, &pass.values[idx]);
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::ZeroPad { top, left, .. } => {
                    let gin = layers::zero_pad_backward(
                        &gout,
                        top,
                        left,
                        pass.values[node.inputs[0]].shape(),
                    );
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::Upsample { factor } => {
                    let gin = layers::upsample_backward(
                        &gout,
                        factor,
                        pass.values[node.inputs[0]].shape(),
                    );
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::Scale { factor } => {
                    let gin = layers::scale_backward(&gout, factor);
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::Concat => {
                    let splits: Vec<usize> = node
                        .inputs
                        .iter()
                        .map(|&i| pass.values[i].channels())
                        .collect();
                    let parts = layers::concat_backward(&gout, &splits);
                    for (&i, part) in node.inputs.iter().zip(&parts) {
                        accumulate(&mut grads[i], part);
                    }
                }
                LayerSpec::Reshape { .. } | LayerSpec::Flatten => {
                    let (_, c, h, w) = pass.values[node.inputs[0]].shape();
                    let gin = gout.reshaped(c, h, w)?;
                    accumulate(&mut grads[node.inputs[0]], &gin);
                }
                LayerSpec::FullyConnected { .. } => {
                    let ParamBlock::Dense { weight, .. } = &self.weights.blocks[idx] else {
                        unreachable!();
                    };
                    let input = &pass.values[node.inputs[0]];
                    let (gin, gw, gb) = layers::fully_connected_backward(&gout, input, weight);
                    accumulate(&mut grads[node.inputs[0]], &gin);
                    let ParamBlock::Dense {
                        weight: pgw,
                        bias: pgb,
                    } = &mut param_grads.blocks[idx]
                    else {
                        unreachable!();
                    };
                    for (a, b) in pgw.iter_mut().zip(&gw) {
                        *a += b;
                    }
                    for (a, b) in pgb.iter_mut().zip(&gb) {
                        *a += b;
                    }
                }
            }
        }
        Ok(param_grads)
    }
}

fn accumulate(slot: &mut Option<Tensor4>, grad: &Tensor4) {
    match slot {
        None => *slot = Some(grad.clone()),
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(grad.data()) {
                *a += b;
            }
        }
    }
}

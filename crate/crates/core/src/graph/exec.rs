use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ModelGraph, Node, Op, ParamStore};
use crate::error::{Error, Result};
use crate::ops::{activation, channel, conv, pool};
use crate::real::Real;
use crate::tensor::Tensor;

/// Every node's activation from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T: Real> {
    acts: Vec<Tensor<T>>,
}

impl<T: Real> Trace<T> {
    pub fn activation(&self, node: usize) -> &Tensor<T> {
        &self.acts[node]
    }

    pub fn len(&self) -> usize {
        self.acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }
}

/// Loss gradients with respect to the input and every parameter.
#[derive(Debug, Clone)]
pub struct Gradients<T: Real> {
    pub input: Tensor<T>,
    pub params: ParamStore<T>,
}

impl<T: Real> ModelGraph<T> {
    fn eval_node(&self, node: &Node, ins: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let out = match node.op {
            Op::Input => return Err(Error::Graph("input node cannot be evaluated".into())),
            Op::Conv { .. } => conv::conv2d(ins[0], &self.conv_params(node)?)?,
            Op::ConvTranspose { .. } => conv::conv2d_transposed(ins[0], &self.conv_params(node)?)?,
            Op::AsymConv => conv::asym_conv_forward(ins[0], &self.asym_params(node)?)?,
            Op::Relu => activation::relu(ins[0]),
            Op::Prelu => activation::prelu(ins[0], self.param(node, 0)?)?,
            Op::Sigmoid => activation::sigmoid(ins[0]),
            Op::MaxPool2 => pool::maxpool2(ins[0])?,
            Op::UpsampleNearest2 => pool::upsample_nearest2(ins[0])?,
            Op::UpsampleBilinear2 => pool::upsample_bilinear2(ins[0])?,
            Op::Concat => channel::concat_channels(ins[0], ins[1])?,
            Op::Slice { start, len } => channel::slice_channels(ins[0], start, len)?,
            Op::Add => ins[0].add(ins[1])?,
            Op::ChannelAttention => {
                let (r, e) = self.attention_params(node)?;
                channel::channel_attention(ins[0], &r, &e)?
            }
        };
        if !out.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} ({})",
                node.name,
                node.op.name()
            )));
        }
        Ok(out)
    }

    /// Forward pass keeping every activation, for use with [`ModelGraph::backward`].
    pub fn trace(&self, x: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(x.shape())?;
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        acts.push(x.clone());
        for node in &self.nodes[1..] {
            let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &acts[i]).collect();
            let out = self.eval_node(node, &ins)?;
            acts.push(out);
        }
        Ok(Trace { acts })
    }

    /// All named outputs, in declaration order. Intermediate activations are
    /// released as soon as their last consumer has run.
    pub fn forward_outputs(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(x.shape())?;
        let n = self.nodes.len();
        let mut last_use = vec![0usize; n];
        for (id, node) in self.nodes.iter().enumerate() {
            for &i in &node.inputs {
                last_use[i] = id;
            }
        }
        for o in &self.outputs {
            last_use[o.node] = usize::MAX;
        }
        let mut acts: Vec<Option<Tensor<T>>> = vec![None; n];
        acts[0] = Some(x.clone());
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            let out = {
                let ins: Vec<&Tensor<T>> = node
                    .inputs
                    .iter()
                    .map(|&i| acts[i].as_ref().expect("activation released early"))
                    .collect();
                self.eval_node(node, &ins)?
            };
            acts[id] = Some(out);
            for &i in &node.inputs {
                if last_use[i] == id {
                    acts[i] = None;
                }
            }
        }
        Ok(self
            .outputs
            .iter()
            .map(|o| acts[o.node].clone().expect("output retained"))
            .collect())
    }

    /// The primary (first) output.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_outputs(x)?.swap_remove(0))
    }

    /// Reverse-mode pass. `grad_outputs[i]` seeds output `i`; `None` means the
    /// loss does not depend on it. Fan-out gradients are summed in reverse
    /// node order, so results are deterministic.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_outputs: &[Option<&Tensor<T>>],
    ) -> Result<Gradients<T>> {
        if trace.acts.len() != self.nodes.len() {
            return Err(Error::Graph("trace does not belong to this graph".into()));
        }
        if grad_outputs.len() != self.outputs.len() {
            return Err(Error::Graph(format!(
                "{} output gradients given for {} outputs",
                grad_outputs.len(),
                self.outputs.len()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for (o, g) in self.outputs.iter().zip(grad_outputs) {
            if let Some(g) = g {
                g.expect_shape(trace.acts[o.node].shape(), "output gradient")?;
                accumulate(&mut grads[o.node], (*g).clone())?;
            }
        }
        let mut pgrads = ParamStore::new();
        for (name, t) in self.params.iter() {
            pgrads.insert(name.clone(), Tensor::zeros_like_shape(t.shape()));
        }

        for id in (1..self.nodes.len()).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            let x = &trace.acts[node.inputs[0]];
            let mut add_param = |i: usize, g: &Tensor<T>| -> Result<()> {
                pgrads.get_mut(&node.params[i])?.add_assign(g)
            };
            let input_grads: Vec<Tensor<T>> = match node.op {
                Op::Input => unreachable!("node 0 is skipped"),
                Op::Conv { .. } => {
                    let g = conv::conv2d_backward(x, &self.conv_params(node)?, &gout)?;
                    add_param(0, &g.kernel)?;
                    add_param(1, &g.bias)?;
                    vec![g.input]
                }
                Op::ConvTranspose { .. } => {
                    let g = conv::conv2d_transposed_backward(x, &self.conv_params(node)?, &gout)?;
                    add_param(0, &g.kernel)?;
                    add_param(1, &g.bias)?;
                    vec![g.input]
                }
                Op::AsymConv => {
                    let (gx, branches) =
                        conv::asym_conv_backward(x, &self.asym_params(node)?, &gout)?;
                    for (b, g) in branches.iter().enumerate() {
                        add_param(2 * b, &g.kernel)?;
                        add_param(2 * b + 1, &g.bias)?;
                    }
                    vec![gx]
                }
                Op::Relu => vec![activation::relu_backward(x, &gout)?],
                Op::Prelu => {
                    let (gx, ga) = activation::prelu_backward(x, self.param(node, 0)?, &gout)?;
                    add_param(0, &ga)?;
                    vec![gx]
                }
                Op::Sigmoid => vec![activation::sigmoid_backward(&trace.acts[id], &gout)?],
                Op::MaxPool2 => vec![pool::maxpool2_backward(x, &gout)?],
                Op::UpsampleNearest2 => vec![pool::upsample_nearest2_backward(x.shape(), &gout)?],
                Op::UpsampleBilinear2 => vec![pool::upsample_bilinear2_backward(x.shape(), &gout)?],
                Op::Concat => {
                    let (a, b) = channel::concat_channels_backward(&gout, x.shape().c)?;
                    vec![a, b]
                }
                Op::Slice { start, .. } => {
                    vec![channel::slice_channels_backward(x.shape(), start, &gout)?]
                }
                Op::Add => vec![gout.clone(), gout],
                Op::ChannelAttention => {
                    let (r, e) = self.attention_params(node)?;
                    let g = channel::channel_attention_backward(x, &r, &e, &gout)?;
                    add_param(0, &g.reduce.kernel)?;
                    add_param(1, &g.reduce.bias)?;
                    add_param(2, &g.expand.kernel)?;
                    add_param(3, &g.expand.bias)?;
                    vec![g.input]
                }
            };
            for (&src, g) in node.inputs.iter().zip(input_grads) {
                accumulate(&mut grads[src], g)?;
            }
        }
        let input = match grads[0].take() {
            Some(g) => g,
            None => Tensor::zeros_like_shape(trace.acts[0].shape()),
        };
        Ok(Gradients {
            input,
            params: pgrads,
        })
    }

    /// Forward then backward for the primary output.
    pub fn forward_backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        let trace = self.trace(x)?;
        let mut seeds: Vec<Option<&Tensor<T>>> = vec![None; self.outputs.len()];
        seeds[0] = Some(grad_out);
        self.backward(&trace, &seeds)
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

//! Model graphs: a topologically ordered list of layer nodes over a named
//! parameter store, with an executor, reverse-mode differentiation, the
//! MAID weight format and graph-rewrite passes.

mod builder;
mod exec;
mod passes;
pub mod weights;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::conv::{self, ConvParams, Padding};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

pub use builder::{GraphBuilder, Init};
pub use exec::{Gradients, Trace};

pub type NodeId = usize;

/// Tag carried by nodes that belong to a detachable super-network head.
pub const SUPERNET_TAG: &str = "supernet";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    /// The image input; always node 0.
    Input,
    /// Same-padded convolution. Params: `[kernel, bias]`.
    Conv {
        stride: usize,
        groups: usize,
    },
    /// Stride-2 transposed convolution. Params: `[kernel (k, k, c_out, c_in), bias]`.
    ConvTranspose {
        stride: usize,
    },
    /// Parallel 3x3 + 1x3 + 3x1 branches. Params: `[w3, b3, w13, b13, w31, b31]`.
    AsymConv,
    Relu,
    /// Params: `[alpha]`.
    Prelu,
    Sigmoid,
    MaxPool2,
    UpsampleNearest2,
    UpsampleBilinear2,
    /// Two inputs stacked along channels.
    Concat,
    Slice {
        start: usize,
        len: usize,
    },
    /// Elementwise sum of two inputs.
    Add,
    /// Params: `[reduce_w, reduce_b, expand_w, expand_b]`.
    ChannelAttention,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv { .. } => "conv",
            Op::ConvTranspose { .. } => "conv_transpose",
            Op::AsymConv => "asym_conv",
            Op::Relu => "relu",
            Op::Prelu => "prelu",
            Op::Sigmoid => "sigmoid",
            Op::MaxPool2 => "maxpool2",
            Op::UpsampleNearest2 => "upsample_nearest2",
            Op::UpsampleBilinear2 => "upsample_bilinear2",
            Op::Concat => "concat",
            Op::Slice { .. } => "slice",
            Op::Add => "add",
            Op::ChannelAttention => "channel_attention",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::Input => 0,
            Op::Concat | Op::Add => 2,
            _ => 1,
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Op::Conv { .. } | Op::ConvTranspose { .. } => 2,
            Op::AsymConv => 6,
            Op::Prelu => 1,
            Op::ChannelAttention => 4,
            _ => 0,
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, Op::Relu | Op::Prelu | Op::Sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub params: Vec<String>,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphOutput {
    pub name: String,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphMeta {
    pub arch: String,
    pub config_hash: u64,
    /// Input height and width must be multiples of this.
    pub downsample: usize,
}

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T: Real = f32> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Option<Tensor<T>> {
        self.map.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::UnresolvedParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::UnresolvedParam(name.into()))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.map.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// A directed acyclic graph of layers. Immutable during inference; training
/// mutates parameters through [`ModelGraph::params_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T: Real = f32> {
    nodes: Vec<Node>,
    params: ParamStore<T>,
    outputs: Vec<GraphOutput>,
    meta: GraphMeta,
}

impl<T: Real> ModelGraph<T> {
    /// Assemble and validate a graph.
    pub fn new(
        nodes: Vec<Node>,
        params: ParamStore<T>,
        outputs: Vec<GraphOutput>,
        meta: GraphMeta,
    ) -> Result<Self> {
        let g = Self {
            nodes,
            params,
            outputs,
            meta,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn outputs(&self) -> &[GraphOutput] {
        &self.outputs
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o.name == name)
    }

    /// Replace every parameter with the tensor of the same name from `store`.
    /// Names and shapes must match exactly.
    pub fn load_params(&mut self, store: ParamStore<T>) -> Result<()> {
        for (name, t) in store.iter() {
            let cur = self.params.get(name).map_err(|_| {
                Error::Graph(format!(
                    "weight file has parameter '{name}' the graph does not use"
                ))
            })?;
            t.expect_shape(cur.shape(), "load_params")?;
        }
        if let Some(missing) = self.params.names().find(|n| !store.contains(n)) {
            return Err(Error::UnresolvedParam(missing.clone()));
        }
        self.params = store;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ModelGraph<U> {
        ModelGraph {
            nodes: self.nodes.clone(),
            params: self.params.cast(),
            outputs: self.outputs.clone(),
            meta: self.meta.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .nodes
            .first()
            .ok_or_else(|| Error::Graph("graph has no nodes".into()))?;
        if first.op != Op::Input {
            return Err(Error::Graph("node 0 must be the input".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::Graph("graph has no outputs".into()));
        }
        if self.meta.downsample == 0 {
            return Err(Error::Graph("downsample factor must be positive".into()));
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if id > 0 && node.op == Op::Input {
                return Err(Error::Graph(format!("node {id} is a second input")));
            }
            if node.inputs.len() != node.op.arity() {
                return Err(Error::Graph(format!(
                    "node {id} ({}) has {} inputs, expected {}",
                    node.name,
                    node.inputs.len(),
                    node.op.arity()
                )));
            }
            if let Some(&bad) = node.inputs.iter().find(|&&i| i >= id) {
                return Err(Error::Graph(format!(
                    "node {id} ({}) consumes node {bad}, which does not precede it",
                    node.name
                )));
            }
            if node.params.len() != node.op.param_count() {
                return Err(Error::Graph(format!(
                    "node {id} ({}) has {} params, expected {}",
                    node.name,
                    node.params.len(),
                    node.op.param_count()
                )));
            }
            for p in &node.params {
                self.params.get(p)?;
            }
        }
        for o in &self.outputs {
            if o.node >= self.nodes.len() {
                return Err(Error::Graph(format!(
                    "output '{}' refers to a missing node",
                    o.name
                )));
            }
        }
        if let Some(orphan) = self.params.names().find(|name| {
            !self
                .nodes
                .iter()
                .any(|n| n.params.iter().any(|p| p == *name))
        }) {
            return Err(Error::Graph(format!(
                "parameter '{orphan}' is not used by any node"
            )));
        }
        Ok(())
    }

    pub(crate) fn param(&self, node: &Node, i: usize) -> Result<&Tensor<T>> {
        self.params.get(&node.params[i])
    }

    pub(crate) fn conv_params<'a>(&'a self, node: &Node) -> Result<ConvParams<'a, T>> {
        let (stride, groups) = match node.op {
            Op::Conv { stride, groups } => (stride, groups),
            Op::ConvTranspose { stride } => (stride, 1),
            _ => {
                return Err(Error::Graph(format!(
                    "node {} is not a convolution",
                    node.name
                )))
            }
        };
        Ok(ConvParams {
            kernel: self.param(node, 0)?,
            bias: Some(self.param(node, 1)?),
            stride: (stride, stride),
            padding: Padding::Same,
            groups,
        })
    }

    pub(crate) fn attention_params<'a>(
        &'a self,
        node: &Node,
    ) -> Result<(ConvParams<'a, T>, ConvParams<'a, T>)> {
        Ok((
            ConvParams::same(self.param(node, 0)?, Some(self.param(node, 1)?)),
            ConvParams::same(self.param(node, 2)?, Some(self.param(node, 3)?)),
        ))
    }

    pub(crate) fn asym_params<'a>(&'a self, node: &Node) -> Result<conv::AsymParams<'a, T>> {
        Ok(conv::AsymParams {
            w3: self.param(node, 0)?,
            b3: self.param(node, 1)?,
            w13: self.param(node, 2)?,
            b13: self.param(node, 3)?,
            w31: self.param(node, 4)?,
            b31: self.param(node, 5)?,
        })
    }

    /// Check the input against the graph's shape contract.
    pub fn check_input(&self, s: Shape) -> Result<()> {
        if s.c != 3 {
            return Err(Error::ChannelMismatch {
                context: "model input",
                expected: 3,
                got: s.c,
            });
        }
        let m = self.meta.downsample;
        if !s.h.is_multiple_of(m) || !s.w.is_multiple_of(m) {
            return Err(Error::IncompatibleSize {
                h: s.h,
                w: s.w,
                multiple: m,
            });
        }
        Ok(())
    }

    /// Output shape of every node for a given input shape, without running kernels.
    pub fn infer_shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        self.check_input(input)?;
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<Shape> = node.inputs.iter().map(|&i| shapes[i]).collect();
            let s = match node.op {
                Op::Input => input,
                Op::Conv { .. } => conv::conv2d_output_shape(ins[0], &self.conv_params(node)?)?,
                Op::ConvTranspose { .. } => {
                    conv::conv2d_transposed_output_shape(ins[0], &self.conv_params(node)?)?
                }
                Op::AsymConv => {
                    let w3 = self.param(node, 0)?;
                    conv::conv2d_output_shape(ins[0], &ConvParams::same(w3, None))?
                }
                Op::Relu | Op::Sigmoid => ins[0],
                Op::Prelu => {
                    let a = self.param(node, 0)?;
                    if a.len() != ins[0].c {
                        return Err(Error::ChannelMismatch {
                            context: "prelu alpha",
                            expected: ins[0].c,
                            got: a.len(),
                        });
                    }
                    ins[0]
                }
                Op::ChannelAttention => {
                    let (r, e) = self.attention_params(node)?;
                    if r.c_in() != ins[0].c || e.c_out() != ins[0].c {
                        return Err(Error::ChannelMismatch {
                            context: "channel_attention",
                            expected: ins[0].c,
                            got: e.c_out(),
                        });
                    }
                    ins[0]
                }
                Op::MaxPool2 => {
                    if !ins[0].h.is_multiple_of(2) || !ins[0].w.is_multiple_of(2) {
                        return Err(Error::InvalidParam(format!(
                            "maxpool2 at node {} needs even dims",
                            node.name
                        )));
                    }
                    ins[0].with_hw(ins[0].h / 2, ins[0].w / 2)
                }
                Op::UpsampleNearest2 | Op::UpsampleBilinear2 => {
                    ins[0].with_hw(ins[0].h * 2, ins[0].w * 2)
                }
                Op::Concat => {
                    let (a, b) = (ins[0], ins[1]);
                    if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
                        return Err(Error::ShapeMismatch {
                            context: "concat",
                            expected: a.with_c(b.c),
                            got: b,
                        });
                    }
                    a.with_c(a.c + b.c)
                }
                Op::Slice { start, len } => {
                    if len == 0 || start + len > ins[0].c {
                        return Err(Error::InvalidParam(format!(
                            "slice {start}+{len} out of {} channels",
                            ins[0].c
                        )));
                    }
                    ins[0].with_c(len)
                }
                Op::Add => {
                    if ins[0] != ins[1] {
                        return Err(Error::ShapeMismatch {
                            context: "add",
                            expected: ins[0],
                            got: ins[1],
                        });
                    }
                    ins[0]
                }
            };
            shapes.push(s);
        }
        Ok(shapes)
    }
}

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GraphMeta, GraphOutput, ModelGraph, Node, NodeId, Op, ParamStore};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Kernel init scale. Kernels are drawn from `U(-b, b)`; biases start at zero
/// and PReLU slopes at 0.25.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// `b = sqrt(6 / fan_in)`, `fan_in = kh * kw * c_in / groups`.
    #[default]
    He,
    /// `b = sqrt(6 / (fan_in + fan_out))`, `fan_out = kh * kw * c_out`.
    Glorot,
}

impl Init {
    fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        let fan = match self {
            Init::He => fan_in,
            Init::Glorot => fan_in + fan_out,
        };
        libm_sqrt(6.0 / fan as f64)
    }
}

/// Incremental graph construction with channel bookkeeping and weight init.
pub struct GraphBuilder<'r> {
    nodes: Vec<Node>,
    channels: Vec<usize>,
    params: ParamStore<f32>,
    outputs: Vec<GraphOutput>,
    tag: Option<String>,
    init: Init,
    rng: &'r mut Rng,
}

impl<'r> GraphBuilder<'r> {
    /// Starts a graph whose input has `in_channels` channels.
    pub fn new(rng: &'r mut Rng, in_channels: usize) -> Self {
        Self {
            nodes: vec![Node {
                name: "input".into(),
                op: Op::Input,
                inputs: Vec::new(),
                params: Vec::new(),
                tag: None,
            }],
            channels: vec![in_channels],
            params: ParamStore::new(),
            outputs: Vec::new(),
            tag: None,
            init: Init::He,
            rng,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn input(&self) -> NodeId {
        0
    }

    pub fn channels(&self, node: NodeId) -> usize {
        self.channels[node]
    }

    /// Tag applied to every node added until the next call.
    pub fn set_tag(&mut self, tag: Option<&str>) {
        self.tag = tag.map(|t| t.to_string());
    }

    fn push(
        &mut self,
        name: &str,
        op: Op,
        inputs: Vec<NodeId>,
        params: Vec<String>,
        c: usize,
    ) -> NodeId {
        self.nodes.push(Node {
            name: name.into(),
            op,
            inputs,
            params,
            tag: self.tag.clone(),
        });
        self.channels.push(c);
        self.nodes.len() - 1
    }

    fn add_param(&mut self, name: String, t: Tensor<f32>) -> Result<String> {
        if self.params.insert(name.clone(), t).is_some() {
            return Err(Error::Graph(format!("duplicate parameter '{name}'")));
        }
        Ok(name)
    }

    fn init_kernel(
        &mut self,
        kh: usize,
        kw: usize,
        cin_g: usize,
        cout: usize,
    ) -> Result<Tensor<f32>> {
        let bound = self.init.bound(kh * kw * cin_g, kh * kw * cout);
        Tensor::uniform(self.rng, (kh, kw, cin_g, cout), -bound, bound)
    }

    /// Explicit-weight convolution (kernel `(kh, kw, c_in/groups, c_out)`).
    pub fn conv_with(
        &mut self,
        name: &str,
        x: NodeId,
        kernel: Tensor<f32>,
        bias: Tensor<f32>,
        stride: usize,
        groups: usize,
    ) -> Result<NodeId> {
        let c_out = kernel.shape().c;
        let w = self.add_param(format!("{name}.w"), kernel)?;
        let b = self.add_param(format!("{name}.b"), bias)?;
        Ok(self.push(
            name,
            Op::Conv { stride, groups },
            vec![x],
            vec![w, b],
            c_out,
        ))
    }

    /// Rectangular, grouped convolution with fresh weights.
    pub fn conv_rect(
        &mut self,
        name: &str,
        x: NodeId,
        kh: usize,
        kw: usize,
        c_out: usize,
        stride: usize,
        groups: usize,
    ) -> Result<NodeId> {
        let c_in = self.channels[x];
        if groups == 0 || !c_in.is_multiple_of(groups) || !c_out.is_multiple_of(groups) {
            return Err(Error::InvalidGroups {
                groups,
                c_in,
                c_out,
            });
        }
        let kernel = self.init_kernel(kh, kw, c_in / groups, c_out)?;
        let bias = Tensor::zeros((1, 1, 1, c_out))?;
        self.conv_with(name, x, kernel, bias, stride, groups)
    }

    pub fn conv(
        &mut self,
        name: &str,
        x: NodeId,
        c_out: usize,
        k: usize,
        stride: usize,
    ) -> Result<NodeId> {
        self.conv_rect(name, x, k, k, c_out, stride, 1)
    }

    /// Depthwise `k x k` (multiplier 1) followed by pointwise 1x1.
    pub fn separable(&mut self, name: &str, x: NodeId, c_out: usize, k: usize) -> Result<NodeId> {
        let c = self.channels[x];
        let dw = self.conv_rect(&format!("{name}.dw"), x, k, k, c, 1, c)?;
        self.conv(&format!("{name}.pw"), dw, c_out, 1, 1)
    }

    /// Stride-2 transposed convolution with kernel `k` (2 or 3).
    pub fn conv_transpose(
        &mut self,
        name: &str,
        x: NodeId,
        c_out: usize,
        k: usize,
    ) -> Result<NodeId> {
        let c_in = self.channels[x];
        // Kernel (k, k, c_out, c_in); the fan-in of the adjoint map is k*k*c_in.
        let bound = self.init.bound(k * k * c_in, k * k * c_out);
        let kernel = Tensor::uniform(self.rng, (k, k, c_out, c_in), -bound, bound)?;
        let w = self.add_param(format!("{name}.w"), kernel)?;
        let b = self.add_param(format!("{name}.b"), Tensor::zeros((1, 1, 1, c_out))?)?;
        Ok(self.push(
            name,
            Op::ConvTranspose { stride: 2 },
            vec![x],
            vec![w, b],
            c_out,
        ))
    }

    /// 3x3 convolution trained with parallel 1x3 and 3x1 branches.
    pub fn asym_conv(&mut self, name: &str, x: NodeId, c_out: usize) -> Result<NodeId> {
        let c_in = self.channels[x];
        let mut names = Vec::with_capacity(6);
        for (suffix, kh, kw) in [("", 3, 3), ("13", 1, 3), ("31", 3, 1)] {
            let kernel = self.init_kernel(kh, kw, c_in, c_out)?;
            names.push(self.add_param(format!("{name}.w{suffix}"), kernel)?);
            names.push(self.add_param(
                format!("{name}.b{suffix}"),
                Tensor::zeros((1, 1, 1, c_out))?,
            )?);
        }
        Ok(self.push(name, Op::AsymConv, vec![x], names, c_out))
    }

    pub fn relu(&mut self, name: &str, x: NodeId) -> NodeId {
        let c = self.channels[x];
        self.push(name, Op::Relu, vec![x], Vec::new(), c)
    }

    pub fn prelu(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let c = self.channels[x];
        let a = self.add_param(format!("{name}.alpha"), Tensor::full((1, 1, 1, c), 0.25)?)?;
        Ok(self.push(name, Op::Prelu, vec![x], vec![a], c))
    }

    pub fn sigmoid(&mut self, name: &str, x: NodeId) -> NodeId {
        let c = self.channels[x];
        self.push(name, Op::Sigmoid, vec![x], Vec::new(), c)
    }

    pub fn maxpool2(&mut self, name: &str, x: NodeId) -> NodeId {
        let c = self.channels[x];
        self.push(name, Op::MaxPool2, vec![x], Vec::new(), c)
    }

    pub fn upsample_nearest2(&mut self, name: &str, x: NodeId) -> NodeId {
        let c = self.channels[x];
        self.push(name, Op::UpsampleNearest2, vec![x], Vec::new(), c)
    }

    pub fn upsample_bilinear2(&mut self, name: &str, x: NodeId) -> NodeId {
        let c = self.channels[x];
        self.push(name, Op::UpsampleBilinear2, vec![x], Vec::new(), c)
    }

    pub fn concat(&mut self, name: &str, a: NodeId, b: NodeId) -> NodeId {
        let c = self.channels[a] + self.channels[b];
        self.push(name, Op::Concat, vec![a, b], Vec::new(), c)
    }

    pub fn slice(&mut self, name: &str, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if len == 0 || start + len > self.channels[x] {
            return Err(Error::InvalidParam(format!(
                "slice {start}+{len} of {} channels",
                self.channels[x]
            )));
        }
        Ok(self.push(name, Op::Slice { start, len }, vec![x], Vec::new(), len))
    }

    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ca, cb) = (self.channels[a], self.channels[b]);
        if ca != cb {
            return Err(Error::ChannelMismatch {
                context: "add",
                expected: ca,
                got: cb,
            });
        }
        Ok(self.push(name, Op::Add, vec![a, b], Vec::new(), ca))
    }

    /// Channel attention with bottleneck width `max(1, c / reduction)`.
    pub fn channel_attention(&mut self, name: &str, x: NodeId, reduction: usize) -> Result<NodeId> {
        let c = self.channels[x];
        let r = (c / reduction.max(1)).max(1);
        let rw = self.init_kernel(1, 1, c, r)?;
        let ew = self.init_kernel(1, 1, r, c)?;
        let names = vec![
            self.add_param(format!("{name}.reduce.w"), rw)?,
            self.add_param(format!("{name}.reduce.b"), Tensor::zeros((1, 1, 1, r))?)?,
            self.add_param(format!("{name}.expand.w"), ew)?,
            self.add_param(format!("{name}.expand.b"), Tensor::zeros((1, 1, 1, c))?)?,
        ];
        Ok(self.push(name, Op::ChannelAttention, vec![x], names, c))
    }

    pub fn output(&mut self, name: &str, node: NodeId) {
        self.outputs.push(GraphOutput {
            name: name.into(),
            node,
        });
    }

    pub fn finish(self, meta: GraphMeta) -> Result<ModelGraph<f32>> {
        let g = ModelGraph::new(self.nodes, self.params, self.outputs, meta)?;
        // Catch channel wiring mistakes at build time.
        let m = g.meta().downsample;
        g.infer_shapes(Shape::new(1, m, m, 3)?)?;
        Ok(g)
    }
}

fn libm_sqrt(v: f64) -> f64 {
    num_traits::Float::sqrt(v)
}

//! Static complexity: parameter, multiply-accumulate and weight-file size counts.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{weights, ModelGraph, Op};
use crate::tensor::Shape;

/// Multiply-accumulates of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMacs {
    pub name: String,
    pub op: &'static str,
    pub macs: u64,
}

/// Total learnable scalars.
pub fn count_params(g: &ModelGraph<f32>) -> u64 {
    g.params().scalar_count() as u64
}

/// Per-node MACs for one forward pass on `input`.
///
/// Convolutions count `H_out W_out C_out (C_in / groups) kh kw` per batch
/// item; a transposed convolution is counted as its adjoint forward
/// convolution; asymmetric nodes count all three branches; channel attention
/// counts its two 1x1 convolutions on the pooled vector. Everything else is 0.
pub fn node_macs(g: &ModelGraph<f32>, input: Shape) -> Result<Vec<NodeMacs>> {
    let shapes = g.infer_shapes(input)?;
    let mut out = Vec::with_capacity(g.nodes().len());
    for (id, node) in g.nodes().iter().enumerate() {
        let y = shapes[id];
        let kernel = |i: usize| g.params().get(&node.params[i]).map(|t| t.shape());
        let macs = match node.op {
            Op::Conv { .. } => {
                let k = kernel(0)?;
                (y.n * y.h * y.w * y.c * k.w * k.n * k.h) as u64
            }
            Op::ConvTranspose { .. } => {
                let x = shapes[node.inputs[0]];
                let k = kernel(0)?;
                (x.n * x.h * x.w * x.c * y.c * k.n * k.h) as u64
            }
            Op::AsymConv => {
                let k = kernel(0)?;
                (y.n * y.h * y.w * y.c * k.w * (9 + 3 + 3)) as u64
            }
            Op::ChannelAttention => {
                let r = kernel(0)?.c;
                (y.n * 2 * y.c * r) as u64
            }
            _ => 0,
        };
        out.push(NodeMacs {
            name: node.name.clone(),
            op: node.op.name(),
            macs,
        });
    }
    Ok(out)
}

pub fn count_macs(g: &ModelGraph<f32>, input: Shape) -> Result<u64> {
    Ok(node_macs(g, input)?.iter().map(|n| n.macs).sum())
}

/// Exact size in bytes of the graph's MAID weight file.
pub fn weight_file_bytes(g: &ModelGraph<f32>) -> u64 {
    weights::encoded_len(g.params()) as u64
}

/// Weight-file size in KiB.
pub fn file_kb(g: &ModelGraph<f32>) -> f64 {
    weight_file_bytes(g) as f64 / 1024.0
}

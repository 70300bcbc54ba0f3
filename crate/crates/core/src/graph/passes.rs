use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{GraphOutput, ModelGraph, Node, Op, SUPERNET_TAG};
use crate::error::{Error, Result};
use crate::real::Real;

/// Name of the output that survives [`ModelGraph::detach_supernet`].
pub const SUBNET_OUTPUT: &str = "sub";

impl<T: Real> ModelGraph<T> {
    /// Number of asymmetric-convolution nodes.
    pub fn asym_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.op == Op::AsymConv).count()
    }

    /// Replace each asymmetric-convolution node by one 3x3 convolution whose
    /// kernel and bias are the algebraic sum of the three branches. The fused
    /// node keeps the 3x3 branch's parameter names. No-op without asym nodes.
    pub fn fuse_asym(&self) -> Result<ModelGraph<T>> {
        let mut g = self.clone();
        for id in 0..g.nodes.len() {
            if g.nodes[id].op != Op::AsymConv {
                continue;
            }
            let (kernel, bias) = g.asym_params(&g.nodes[id])?.fuse()?;
            let node = &mut g.nodes[id];
            let dropped: Vec<String> = node.params.drain(2..).collect();
            for p in &dropped {
                g.params.remove(p);
            }
            node.op = Op::Conv {
                stride: 1,
                groups: 1,
            };
            *g.params.get_mut(&node.params[0])? = kernel;
            *g.params.get_mut(&node.params[1])? = bias;
        }
        g.validate()?;
        Ok(g)
    }

    /// Drop every node tagged as super-network, the parameters only they use,
    /// and every output they feed. The subnet output becomes the sole output.
    /// Idempotent on an already-detached joint graph; errors on graphs that
    /// never had a super-network.
    pub fn detach_supernet(&self) -> Result<ModelGraph<T>> {
        let tagged = |n: &Node| n.tag.as_deref() == Some(SUPERNET_TAG);
        let sub = self
            .outputs
            .iter()
            .find(|o| o.name == SUBNET_OUTPUT)
            .ok_or_else(|| Error::Graph("graph has no supernet tag or subnet output".into()))?;
        if !self.nodes.iter().any(tagged) {
            if self.outputs.len() == 1 {
                return Ok(self.clone());
            }
            return Err(Error::Graph("graph has no supernet-tagged nodes".into()));
        }
        if tagged(&self.nodes[sub.node]) {
            return Err(Error::Graph(
                "subnet output depends on a supernet node".into(),
            ));
        }

        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (id, n) in self.nodes.iter().enumerate() {
            if tagged(n) {
                continue;
            }
            let mut n = n.clone();
            for i in n.inputs.iter_mut() {
                if remap[*i] == usize::MAX {
                    return Err(Error::Graph(
                        "untagged node consumes a supernet node".into(),
                    ));
                }
                *i = remap[*i];
            }
            remap[id] = nodes.len();
            nodes.push(n);
        }
        let used: BTreeSet<&String> = nodes.iter().flat_map(|n| n.params.iter()).collect();
        let mut params = self.params.clone();
        let orphans: Vec<String> = params
            .names()
            .filter(|p| !used.contains(p))
            .cloned()
            .collect();
        for p in &orphans {
            params.remove(p);
        }
        let outputs = vec![GraphOutput {
            name: SUBNET_OUTPUT.into(),
            node: remap[sub.node],
        }];
        ModelGraph::new(nodes, params, outputs, self.meta.clone())
    }
}

//! Configurable builders for the five compact denoising architectures.
//!
//! | arch | downsampling | upsampling | notable blocks |
//! |---|---|---|---|
//! | `megvii-splitdec` | stride-2 conv | bilinear | split two-branch decoder convs |
//! | `mier-smallunet` | 2 stride-2 convs | 2 transposed convs | residual blocks, optional asym training |
//! | `enerzai-joint` | stride-2 conv | transposed conv | shared trunk, subnet + supernet heads |
//! | `enerzai-dense` | stride-2 conv | transposed conv | dense bottleneck, PReLU |
//! | `moma-unets` | maxpool | nearest | separable convs only |

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, GraphMeta, Init, ModelGraph, NodeId, SUPERNET_TAG};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    MegviiSplitdec,
    MierSmallunet,
    EnerzaiJoint,
    EnerzaiDense,
    MomaUnets,
}

impl Arch {
    pub const ALL: [Arch; 5] = [
        Arch::MegviiSplitdec,
        Arch::MierSmallunet,
        Arch::EnerzaiJoint,
        Arch::EnerzaiDense,
        Arch::MomaUnets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::MegviiSplitdec => "megvii-splitdec",
            Arch::MierSmallunet => "mier-smallunet",
            Arch::EnerzaiJoint => "enerzai-joint",
            Arch::EnerzaiDense => "enerzai-dense",
            Arch::MomaUnets => "moma-unets",
        }
    }

    pub fn from_name(s: &str) -> Result<Arch> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown architecture '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Prelu,
}

/// Width/depth knobs for a zoo architecture. Serialized as the JSON
/// architecture config.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub arch: Arch,
    pub base_channels: usize,
    /// Number of 2x downsampling stages.
    pub depth: usize,
    /// Per-level channel widths, `depth + 1` entries. Derived from
    /// `base_channels` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    /// Residual blocks (mier) or dense layers (enerzai-dense); unused elsewhere.
    pub blocks: usize,
    /// Residual dense blocks in the enerzai-joint supernet head.
    pub supernet_rdb_count: usize,
    pub activation: Activation,
    /// Train-time 1x3 / 3x1 branches beside the residual-block convs (mier).
    #[serde(default)]
    pub asym: bool,
    /// Add the input image to the output (mier).
    #[serde(default)]
    pub global_skip: bool,
    /// Channel attention after the bottleneck and each decoder level.
    #[serde(default)]
    pub channel_attention: bool,
    /// Build the enerzai-joint trunk with its supernet head already removed.
    #[serde(default)]
    pub detached: bool,
    /// Kernel init scale for freshly built weights.
    #[serde(default)]
    pub init: Init,
}

pub const CA_REDUCTION: usize = 4;

impl ArchConfig {
    pub fn default_for(arch: Arch) -> Self {
        let (base, depth, blocks, act) = match arch {
            Arch::MegviiSplitdec => (16, 3, 0, Activation::Relu),
            Arch::MierSmallunet => (16, 2, 4, Activation::Relu),
            Arch::EnerzaiJoint => (16, 3, 0, Activation::Relu),
            Arch::EnerzaiDense => (16, 2, 4, Activation::Prelu),
            Arch::MomaUnets => (32, 3, 0, Activation::Relu),
        };
        Self {
            arch,
            base_channels: base,
            depth,
            widths: None,
            blocks,
            supernet_rdb_count: 2,
            activation: act,
            asym: arch == Arch::MierSmallunet,
            global_skip: arch == Arch::MierSmallunet,
            channel_attention: false,
            detached: false,
            init: Init::He,
        }
    }

    /// Channel width at every resolution level, finest first.
    ///
    /// Default: `w_0 = b`, `w_i = max(b, b (i + 1) / 2)` for `i >= 1`, rounded
    /// up to a multiple of 8 (or 2 when `b` is not a multiple of 8).
    pub fn level_widths(&self) -> Vec<usize> {
        if let Some(w) = &self.widths {
            return w.clone();
        }
        let b = self.base_channels;
        let q = if b.is_multiple_of(8) { 8 } else { 2 };
        (0..=self.depth)
            .map(|i| {
                let raw = if i == 0 {
                    b
                } else {
                    b.max((b * (i + 1)).div_ceil(2))
                };
                raw.div_ceil(q) * q
            })
            .collect()
    }

    /// Required multiple for input height and width.
    pub fn downsample(&self) -> usize {
        1 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if self.depth == 0 || self.depth > 6 {
            return bad(format!("depth {} outside 1..=6", self.depth));
        }
        let w = self.level_widths();
        if w.len() != self.depth + 1 {
            return bad(format!("{} widths given for depth {}", w.len(), self.depth));
        }
        if w.contains(&0) {
            return bad("zero channel width".into());
        }
        match self.arch {
            Arch::MegviiSplitdec => {
                if let Some(c) = w.iter().find(|&&c| c % 8 != 0) {
                    return bad(format!(
                        "megvii-splitdec widths must be multiples of 8, got {c}"
                    ));
                }
            }
            Arch::MierSmallunet => {
                if self.depth != 2 {
                    return bad("mier-smallunet has exactly two stride-2 stages (depth 2)".into());
                }
            }
            Arch::EnerzaiDense => {
                if self.blocks == 0 {
                    return bad("enerzai-dense needs at least one dense layer".into());
                }
            }
            Arch::EnerzaiJoint => {
                if self.supernet_rdb_count == 0 && !self.detached {
                    return bad("enerzai-joint needs at least one supernet block".into());
                }
            }
            Arch::MomaUnets => {}
        }
        if self.asym && self.arch != Arch::MierSmallunet {
            return bad("asym branches are only defined for mier-smallunet".into());
        }
        if self.detached && self.arch != Arch::EnerzaiJoint {
            return bad("only enerzai-joint has a supernet to detach".into());
        }
        Ok(())
    }

    /// Stable 64-bit digest of the configuration (FNV-1a over the derived `Hash`).
    pub fn config_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        self.hash(&mut h);
        h.finish()
    }
}

struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_usize(&mut self, v: usize) {
        self.write(&(v as u64).to_le_bytes());
    }
}

/// Build any zoo model; weights drawn from a generator seeded with `seed`.
pub fn build(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph<f32>> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let mut b = GraphBuilder::new(&mut rng, 3).with_init(cfg.init);
    let meta = GraphMeta {
        arch: cfg.arch.name().into(),
        config_hash: cfg.config_hash(),
        downsample: cfg.downsample(),
    };
    match cfg.arch {
        Arch::MegviiSplitdec => megvii(&mut b, cfg)?,
        Arch::MierSmallunet => mier(&mut b, cfg)?,
        Arch::EnerzaiJoint => enerzai_joint(&mut b, cfg)?,
        Arch::EnerzaiDense => enerzai_dense(&mut b, cfg)?,
        Arch::MomaUnets => moma(&mut b, cfg)?,
    }
    b.finish(meta)
}

pub fn build_megvii(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph<f32>> {
    expect_arch(cfg, Arch::MegviiSplitdec)?;
    build(cfg, seed)
}

pub fn build_mier(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph<f32>> {
    expect_arch(cfg, Arch::MierSmallunet)?;
    build(cfg, seed)
}

pub fn build_enerzai_joint(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph<f32>> {
    expect_arch(cfg, Arch::EnerzaiJoint)?;
    build(cfg, seed)
}

pub fn build_enerzai_dense(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph<f32>> {
    expect_arch(cfg, Arch::EnerzaiDense)?;
    build(cfg, seed)
}

pub fn build_moma(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph<f32>> {
    expect_arch(cfg, Arch::MomaUnets)?;
    build(cfg, seed)
}

fn expect_arch(cfg: &ArchConfig, arch: Arch) -> Result<()> {
    if cfg.arch != arch {
        return Err(Error::InvalidParam(format!(
            "config is for {}, not {}",
            cfg.arch.name(),
            arch.name()
        )));
    }
    Ok(())
}

fn act(b: &mut GraphBuilder<'_>, name: &str, x: NodeId, a: Activation) -> Result<NodeId> {
    match a {
        Activation::Relu => Ok(b.relu(&format!("{name}.relu"), x)),
        Activation::Prelu => b.prelu(&format!("{name}.prelu"), x),
    }
}

fn conv_act(
    b: &mut GraphBuilder<'_>,
    name: &str,
    x: NodeId,
    c: usize,
    stride: usize,
    a: Activation,
) -> Result<NodeId> {
    let y = b.conv(name, x, c, 3, stride)?;
    act(b, name, y, a)
}

fn maybe_ca(b: &mut GraphBuilder<'_>, cfg: &ArchConfig, name: &str, x: NodeId) -> Result<NodeId> {
    if cfg.channel_attention {
        b.channel_attention(&format!("{name}.ca"), x, CA_REDUCTION)
    } else {
        Ok(x)
    }
}

/// Stem plus `depth` stride-2 levels. Returns the bottleneck and the skip
/// tensors of levels `0..depth`.
fn strided_encoder(b: &mut GraphBuilder<'_>, cfg: &ArchConfig) -> Result<(NodeId, Vec<NodeId>)> {
    let w = cfg.level_widths();
    let a = cfg.activation;
    let mut x = conv_act(b, "enc0", b.input(), w[0], 1, a)?;
    let mut skips = Vec::with_capacity(cfg.depth);
    for (i, &c) in w.iter().enumerate().skip(1) {
        skips.push(x);
        x = conv_act(b, &format!("enc{i}.down"), x, c, 2, a)?;
        x = conv_act(b, &format!("enc{i}.conv"), x, c, 1, a)?;
    }
    Ok((x, skips))
}

fn megvii(b: &mut GraphBuilder<'_>, cfg: &ArchConfig) -> Result<()> {
    let w = cfg.level_widths();
    let a = cfg.activation;
    let (x, skips) = strided_encoder(b, cfg)?;
    let mut x = maybe_ca(b, cfg, "bottleneck", x)?;
    for i in (0..cfg.depth).rev() {
        let c = w[i];
        let p = format!("dec{i}");
        let up = b.upsample_bilinear2(&format!("{p}.up"), x);
        let cat = b.concat(&format!("{p}.cat"), up, skips[i]);
        let y = conv_act(b, &format!("{p}.conv"), cat, c, 1, a)?;
        let lo = b.slice(&format!("{p}.split0"), y, 0, c / 2)?;
        let hi = b.slice(&format!("{p}.split1"), y, c / 2, c - c / 2)?;
        let lo = conv_act(b, &format!("{p}.half0"), lo, c / 2, 1, a)?;
        let hi = conv_act(b, &format!("{p}.half1"), hi, c - c / 2, 1, a)?;
        let y = b.concat(&format!("{p}.merge"), lo, hi);
        x = maybe_ca(b, cfg, &p, y)?;
    }
    let out = b.conv("head", x, 3, 3, 1)?;
    b.output("out", out);
    Ok(())
}

fn mier(b: &mut GraphBuilder<'_>, cfg: &ArchConfig) -> Result<()> {
    let w = cfg.level_widths();
    let a = cfg.activation;
    let mut x = conv_act(b, "down0", b.input(), w[1], 2, a)?;
    x = conv_act(b, "down1", x, w[2], 2, a)?;
    let c = w[2];
    for r in 0..cfg.blocks {
        let p = format!("res{r}");
        let conv = |b: &mut GraphBuilder<'_>, name: &str, x: NodeId| {
            if cfg.asym {
                b.asym_conv(name, x, c)
            } else {
                b.conv(name, x, c, 3, 1)
            }
        };
        let y = conv(b, &format!("{p}.conv0"), x)?;
        let y = act(b, &format!("{p}.conv0"), y, a)?;
        let y = conv(b, &format!("{p}.conv1"), y)?;
        x = b.add(&format!("{p}.add"), x, y)?;
    }
    x = maybe_ca(b, cfg, "bottleneck", x)?;
    let y = b.conv_transpose("up0", x, w[1], 3)?;
    let y = act(b, "up0", y, a)?;
    let mut out = b.conv_transpose("up1", y, 3, 3)?;
    if cfg.global_skip {
        out = b.add("skip", out, b.input())?;
    }
    b.output("out", out);
    Ok(())
}

/// U-Net with transposed-conv upsampling; returns the full-resolution features.
fn transposed_unet(
    b: &mut GraphBuilder<'_>,
    cfg: &ArchConfig,
    bottleneck: impl FnOnce(&mut GraphBuilder<'_>, NodeId) -> Result<NodeId>,
) -> Result<NodeId> {
    let w = cfg.level_widths();
    let a = cfg.activation;
    let (x, skips) = strided_encoder(b, cfg)?;
    let x = bottleneck(b, x)?;
    let mut x = maybe_ca(b, cfg, "bottleneck", x)?;
    for i in (0..cfg.depth).rev() {
        let p = format!("dec{i}");
        let up = b.conv_transpose(&format!("{p}.up"), x, w[i], 2)?;
        let up = act(b, &format!("{p}.up"), up, a)?;
        let cat = b.concat(&format!("{p}.cat"), up, skips[i]);
        let y = conv_act(b, &format!("{p}.conv"), cat, w[i], 1, a)?;
        x = maybe_ca(b, cfg, &p, y)?;
    }
    Ok(x)
}

fn enerzai_joint(b: &mut GraphBuilder<'_>, cfg: &ArchConfig) -> Result<()> {
    let trunk = transposed_unet(b, cfg, |_, x| Ok(x))?;
    let sub = b.conv("sub.head", trunk, 3, 3, 1)?;
    b.output("sub", sub);
    if cfg.detached {
        return Ok(());
    }
    b.set_tag(Some(SUPERNET_TAG));
    let c = b.channels(trunk);
    let growth = (cfg.base_channels / 2).max(1);
    let mut x = trunk;
    for r in 0..cfg.supernet_rdb_count {
        let p = format!("super.rdb{r}");
        let mut feats = x;
        for l in 0..3 {
            let y = b.conv(&format!("{p}.l{l}"), feats, growth, 3, 1)?;
            let y = b.prelu(&format!("{p}.l{l}.prelu"), y)?;
            feats = b.concat(&format!("{p}.l{l}.cat"), feats, y);
        }
        let fused = b.conv(&format!("{p}.fuse"), feats, c, 1, 1)?;
        x = b.add(&format!("{p}.add"), x, fused)?;
    }
    let sup = b.conv("super.head", x, 3, 3, 1)?;
    b.set_tag(None);
    b.output("super", sup);
    Ok(())
}

fn enerzai_dense(b: &mut GraphBuilder<'_>, cfg: &ArchConfig) -> Result<()> {
    let growth = (cfg.base_channels / 2).max(1);
    let layers = cfg.blocks;
    let a = cfg.activation;
    let x = transposed_unet(b, cfg, |b, x| {
        let c = b.channels(x);
        let mut feats = x;
        for l in 0..layers {
            let y = conv_act(b, &format!("dense.l{l}"), feats, growth, 1, a)?;
            feats = b.concat(&format!("dense.l{l}.cat"), feats, y);
        }
        let fused = b.conv("dense.fuse", feats, c, 1, 1)?;
        b.add("dense.add", x, fused)
    })?;
    let out = b.conv("head", x, 3, 3, 1)?;
    b.output("out", out);
    Ok(())
}

fn sep_act(
    b: &mut GraphBuilder<'_>,
    name: &str,
    x: NodeId,
    c: usize,
    a: Activation,
) -> Result<NodeId> {
    let y = b.separable(name, x, c, 3)?;
    act(b, name, y, a)
}

fn moma(b: &mut GraphBuilder<'_>, cfg: &ArchConfig) -> Result<()> {
    let w = cfg.level_widths();
    let a = cfg.activation;
    let mut x = sep_act(b, "enc0.a", b.input(), w[0], a)?;
    x = sep_act(b, "enc0.b", x, w[0], a)?;
    let mut skips = Vec::with_capacity(cfg.depth);
    for (i, &c) in w.iter().enumerate().skip(1) {
        skips.push(x);
        let p = b.maxpool2(&format!("enc{i}.pool"), x);
        x = sep_act(b, &format!("enc{i}.a"), p, c, a)?;
        x = sep_act(b, &format!("enc{i}.b"), x, c, a)?;
    }
    x = maybe_ca(b, cfg, "bottleneck", x)?;
    for i in (0..cfg.depth).rev() {
        let p = format!("dec{i}");
        let up = b.upsample_nearest2(&format!("{p}.up"), x);
        let cat = b.concat(&format!("{p}.cat"), up, skips[i]);
        x = sep_act(b, &format!("{p}.a"), cat, w[i], a)?;
        x = sep_act(b, &format!("{p}.b"), x, w[i], a)?;
        x = maybe_ca(b, cfg, &p, x)?;
    }
    let out = b.separable("head", x, 3, 3)?;
    b.output("out", out);
    Ok(())
}

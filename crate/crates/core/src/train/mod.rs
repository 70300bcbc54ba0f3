//! Losses, optimizer, schedules, augmentation and the training loop.
//!
//! Three modes are supported: plain supervised training, distillation
//! against a frozen teacher's predictions, and joint training of a model with
//! `sub`/`super` outputs that drops its supernet head once the subnet's
//! validation PSNR reaches a threshold.

pub mod augment;
pub mod loss;
pub mod optim;
pub mod schedule;

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ModelGraph;
use crate::metrics;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::zoo::{self, ArchConfig};

pub use augment::{augment, AugmentFlags, Pair};
pub use loss::{loss, ms_ssim, LossSpec, MixTerm};
pub use optim::{Adam, AdamConfig};
pub use schedule::ScheduleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Plain,
    /// `alpha_kd L(pred, clean) + (1 - alpha_kd) L(pred, teacher(noisy))`.
    Distill { alpha_kd: f64 },
    /// `L(sub) + L(super)` until subnet validation PSNR >= `tau` dB, then subnet only.
    Joint { tau: f64 },
}

pub const DEFAULT_ALPHA_KD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub loss: LossSpec,
    #[serde(default)]
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub patch_size: usize,
    pub iterations: u64,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub augment: AugmentFlags,
    #[serde(default)]
    pub mode: TrainMode,
    pub seed: u64,
    /// Validation (and history) interval in iterations.
    pub val_every: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.loss.validate()?;
        self.schedule.validate()?;
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(self.arch.downsample()) {
            return bad("patch_size must be a positive multiple of 2^depth");
        }
        if self.val_every == 0 {
            return bad("val_every must be at least 1");
        }
        match self.mode {
            TrainMode::Distill { alpha_kd } if !(0.0..=1.0).contains(&alpha_kd) => {
                bad("alpha_kd must lie in [0, 1]")
            }
            TrainMode::Joint { .. }
                if self.arch.arch != zoo::Arch::EnerzaiJoint || self.arch.detached =>
            {
                bad("joint mode needs an undetached enerzai-joint architecture")
            }
            _ => Ok(()),
        }
    }
}

/// In-memory training and validation pairs, each `(1, H, W, 3)`.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Pair<f32>>,
    pub val: Vec<Pair<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: u64,
    pub lr: f64,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub val_psnr: f64,
    /// Absent when validation images are smaller than the SSIM window.
    pub val_ssim: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub graph: ModelGraph<f32>,
    pub history: Vec<HistoryRow>,
    /// Iteration at which the supernet was detached (joint mode).
    pub detached_at: Option<u64>,
}

/// Mean per-image PSNR and SSIM of the primary output over `pairs`. Images
/// are cropped to the graph's size multiple first.
pub fn validate(g: &ModelGraph<f32>, pairs: &[Pair<f32>]) -> Result<(f64, Option<f64>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = g.meta().downsample;
    let (mut psnr, mut ssim, mut ssim_ok) = (0.0, 0.0, true);
    for p in pairs {
        let s = p.noisy.shape();
        let (h, w) = (s.h / m * m, s.w / m * m);
        let noisy = p.noisy.crop(0, 0, h, w)?;
        let clean = p.clean.crop(0, 0, h, w)?;
        let out = g.forward(&noisy)?.clamp(0.0, 1.0);
        psnr += metrics::mean_psnr(&out, &clean)?;
        match metrics::ssim(&out, &clean) {
            Ok(v) => ssim += v,
            Err(_) => ssim_ok = false,
        }
    }
    let n = pairs.len() as f64;
    Ok((psnr / n, ssim_ok.then_some(ssim / n)))
}

fn sample_batch(
    rng: &mut Rng,
    data: &[Pair<f32>],
    batch: usize,
    patch: usize,
) -> Result<Vec<Pair<f32>>> {
    (0..batch)
        .map(|_| {
            let p = &data[rng.index(data.len())];
            let s = p.noisy.shape();
            if s.h < patch || s.w < patch {
                return Err(Error::InvalidParam(format!(
                    "training image {}x{} is smaller than patch {patch}",
                    s.h, s.w
                )));
            }
            let y = rng.index(s.h - patch + 1);
            let x = rng.index(s.w - patch + 1);
            Ok(Pair {
                noisy: p.noisy.crop(y, x, patch, patch)?,
                clean: p.clean.crop(y, x, patch, patch)?,
            })
        })
        .collect()
}

fn diverged(iter: u64, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Diverged {
            iter: iter as usize,
            detail,
        },
        other => other,
    }
}

/// Build the configured architecture (weights seeded by `cfg.seed`) and train it.
pub fn train(
    cfg: &TrainConfig,
    data: &Dataset,
    teacher: Option<&ModelGraph<f32>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let graph = zoo::build(&cfg.arch, cfg.seed)?;
    train_graph(cfg, graph, data, teacher)
}

/// Train an existing graph. Data sampling uses a generator derived from `cfg.seed`.
pub fn train_graph(
    cfg: &TrainConfig,
    mut graph: ModelGraph<f32>,
    data: &Dataset,
    teacher: Option<&ModelGraph<f32>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let teacher = match cfg.mode {
        TrainMode::Distill { alpha_kd } if alpha_kd < 1.0 => Some(teacher.ok_or_else(|| {
            Error::InvalidParam("distillation with alpha_kd < 1 needs a teacher model".into())
        })?),
        _ => None,
    };
    let mut joint = matches!(cfg.mode, TrainMode::Joint { .. });
    if joint && graph.outputs().len() != 2 {
        return Err(Error::InvalidParam(
            "joint mode needs a graph with sub and super outputs".into(),
        ));
    }

    let mut rng = Rng::derive(cfg.seed, 1);
    let mut adam = Adam::new(cfg.adam);
    let mut history = Vec::new();
    let mut detached_at = None;
    let (mut loss_sum, mut loss_count) = (0.0, 0u64);

    for it in 0..cfg.iterations {
        let lr = cfg.schedule.lr_at(it);
        let mut batch = sample_batch(&mut rng, &data.train, cfg.batch_size, cfg.patch_size)?;
        augment(&mut rng, &mut batch, &cfg.augment)?;
        let noisy = Tensor::stack(&batch.iter().map(|p| p.noisy.clone()).collect::<Vec<_>>())?;
        let clean = Tensor::stack(&batch.iter().map(|p| p.clean.clone()).collect::<Vec<_>>())?;

        let trace = graph.trace(&noisy).map_err(|e| diverged(it, e))?;
        let outputs: Vec<&Tensor<f32>> = graph
            .outputs()
            .iter()
            .map(|o| trace.activation(o.node))
            .collect();
        let mut seeds: Vec<Option<Tensor<f32>>> = vec![None; outputs.len()];
        let value = match cfg.mode {
            TrainMode::Distill { alpha_kd } if teacher.is_some() => {
                let t_out = teacher.expect("checked").forward(&noisy)?;
                let (lc, gc) = loss(&cfg.loss, outputs[0], &clean)?;
                let (lt, gt) = loss(&cfg.loss, outputs[0], &t_out)?;
                seeds[0] = Some(gc.zip_map(&gt, |a, b| {
                    (alpha_kd as f32) * a + (1.0 - alpha_kd as f32) * b
                })?);
                alpha_kd * lc + (1.0 - alpha_kd) * lt
            }
            _ if joint => {
                let (ls, gs) = loss(&cfg.loss, outputs[0], &clean)?;
                let (lp, gp) = loss(&cfg.loss, outputs[1], &clean)?;
                seeds[0] = Some(gs);
                seeds[1] = Some(gp);
                ls + lp
            }
            _ => {
                let (l, g) = loss(&cfg.loss, outputs[0], &clean)?;
                seeds[0] = Some(g);
                l
            }
        };
        if !value.is_finite() {
            return Err(Error::Diverged {
                iter: it as usize,
                detail: format!("loss is {value}"),
            });
        }
        let seed_refs: Vec<Option<&Tensor<f32>>> = seeds.iter().map(|s| s.as_ref()).collect();
        let grads = graph
            .backward(&trace, &seed_refs)
            .map_err(|e| diverged(it, e))?;
        drop(trace);
        adam.step(graph.params_mut(), &grads.params, lr)
            .map_err(|e| diverged(it, e))?;
        loss_sum += value;
        loss_count += 1;

        let done = it + 1;
        if done % cfg.val_every == 0 || done == cfg.iterations {
            let (val_psnr, val_ssim) = validate(&graph, &data.val)?;
            history.push(HistoryRow {
                iter: done,
                lr,
                loss: loss_sum / loss_count as f64,
                val_psnr,
                val_ssim,
            });
            loss_sum = 0.0;
            loss_count = 0;
            if let TrainMode::Joint { tau } = cfg.mode {
                if joint && val_psnr >= tau {
                    graph = graph.detach_supernet()?;
                    adam.retain(graph.params());
                    joint = false;
                    detached_at = Some(done);
                }
            }
        }
    }
    Ok(TrainOutcome {
        graph,
        history,
        detached_at,
    })
}

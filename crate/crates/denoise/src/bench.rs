//! Host wall-clock benchmarking and the leaderboard table.
//!
//! Host timings are not comparable with on-device numbers; every report
//! carries a host descriptor so results are never read out of context.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use denoise_core::graph::ModelGraph;
use denoise_core::metrics::{self, ScoreConfig};
use denoise_core::profile::{count_macs, count_params, file_kb};
use denoise_core::train::Pair;
use denoise_core::{Rng, Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::weights_digest;

pub const DEFAULT_WARMUP: usize = 5;
pub const DEFAULT_RUNS: usize = 50;
/// Width and height of a 480p frame.
pub const DEFAULT_SIZE: (usize, usize) = (720, 480);
/// Threads the core operators actually use.
pub const OP_THREADS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub runs: usize,
    pub warmup: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub thread_count: usize,
}

impl Timing {
    /// Summarizes measured (post-warmup) samples.
    pub fn from_samples(samples_ms: &[f64], warmup: usize, thread_count: usize) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::Config("at least one timed run is required".into()));
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        // Nearest-rank percentile.
        let p95 = s[(0.95 * n as f64).ceil() as usize - 1];
        Ok(Self {
            runs: n,
            warmup,
            median_ms: median,
            mean_ms: s.iter().sum::<f64>() / n as f64,
            p95_ms: p95,
            thread_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub psnr: f64,
    pub ssim: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub weights_hash: String,
    /// `[n, h, w, c]`.
    pub input_shape: [usize; 4],
    pub param_count: u64,
    pub mac_count: u64,
    pub file_kb: f64,
    pub timing: Timing,
    /// Digest of the benchmark output; identical across runs of one graph.
    pub output_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    pub host: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub c: f64,
}

/// Source of per-run durations. The wall clock in production, scripted
/// values in tests.
pub trait Stopwatch {
    fn time(&mut self, run: &mut dyn FnMut() -> Result<()>) -> Result<f64>;
}

pub struct WallClock;

impl Stopwatch for WallClock {
    fn time(&mut self, run: &mut dyn FnMut() -> Result<()>) -> Result<f64> {
        let t0 = Instant::now();
        run()?;
        Ok(t0.elapsed().as_secs_f64() * 1e3)
    }
}

/// Runs the workload but reports pre-set durations in order.
pub struct Scripted(pub std::collections::VecDeque<f64>);

impl Stopwatch for Scripted {
    fn time(&mut self, run: &mut dyn FnMut() -> Result<()>) -> Result<f64> {
        run()?;
        self.0
            .pop_front()
            .ok_or_else(|| Error::Config("scripted stopwatch ran out of samples".into()))
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub input: Shape,
    pub runs: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        let (w, h) = DEFAULT_SIZE;
        Self {
            input: Shape::new(1, h, w, 3).expect("non-zero"),
            runs: DEFAULT_RUNS,
            warmup: DEFAULT_WARMUP,
            seed: 0,
        }
    }
}

pub fn host_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} {}, {cpu}, {cores} logical cores (host wall clock)",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn tensor_digest(t: &Tensor<f32>) -> String {
    let h = t.data().iter().flat_map(|v| v.to_bits().to_le_bytes()).fold(
        0xcbf2_9ce4_8422_2325u64,
        |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3),
    );
    format!("{h:016x}")
}

pub fn benchmark(
    name: &str,
    g: &ModelGraph<f32>,
    opts: &BenchOptions,
    clock: &mut dyn Stopwatch,
) -> Result<BenchReport> {
    if opts.runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    g.check_input(opts.input)?;
    let x = Tensor::uniform(&mut Rng::new(opts.seed), opts.input, 0.0, 1.0)?;
    let mut first: Option<Tensor<f32>> = None;
    let mut run = || -> Result<()> {
        let y = g.forward(&x)?;
        match &first {
            Some(f) if f != &y => {
                Err(Error::Config("benchmark outputs differ between runs".into()))
            }
            Some(_) => Ok(()),
            None => {
                first = Some(y);
                Ok(())
            }
        }
    };
    for _ in 0..opts.warmup {
        clock.time(&mut run)?;
    }
    let samples = (0..opts.runs)
        .map(|_| clock.time(&mut run))
        .collect::<Result<Vec<_>>>()?;
    let output_hash = tensor_digest(first.as_ref().expect("at least one run"));
    Ok(BenchReport {
        model: name.to_string(),
        weights_hash: weights_digest(g),
        input_shape: opts.input.dims(),
        param_count: count_params(g),
        mac_count: count_macs(g, opts.input)?,
        file_kb: file_kb(g),
        timing: Timing::from_samples(&samples, opts.warmup, OP_THREADS)?,
        output_hash,
        quality: None,
        score: None,
        host: host_descriptor(),
    })
}

/// Mean PSNR and SSIM of the model over `pairs`, each cropped to the
/// model's size multiple.
pub fn evaluate(g: &ModelGraph<f32>, pairs: &[Pair<f32>]) -> Result<Quality> {
    if pairs.is_empty() {
        return Err(Error::Config("no evaluation pairs".into()));
    }
    let m = g.meta().downsample;
    let (mut psnr, mut ssim) = (0.0, 0.0);
    for p in pairs {
        let s = p.noisy.shape();
        let (h, w) = (s.h / m * m, s.w / m * m);
        let out = g.forward(&p.noisy.crop(0, 0, h, w)?)?.clamp(0.0, 1.0);
        let clean = p.clean.crop(0, 0, h, w)?;
        psnr += metrics::psnr(&out, &clean)?;
        ssim += metrics::ssim(&out, &clean)?;
    }
    let n = pairs.len() as f64;
    Ok(Quality {
        psnr: psnr / n,
        ssim: ssim / n,
        images: pairs.len(),
    })
}

pub fn attach_score(report: &mut BenchReport, cfg: &ScoreConfig) -> Result<()> {
    if let Some(q) = &report.quality {
        report.score = Some(Score {
            value: metrics::final_score(q.psnr, report.timing.median_ms, cfg)?,
            c: cfg.c,
        });
    }
    Ok(())
}

pub const LEADERBOARD_HEADER: &str = "name,size_kb,psnr,ssim,runtime_ms,score";

/// One row per report: name, KB, PSNR, SSIM, ms, score. Missing quality or
/// score fields are left empty.
pub fn write_leaderboard(path: &Path, reports: &[BenchReport]) -> Result<()> {
    let mut out = String::from(LEADERBOARD_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>, digits: usize| v.map_or(String::new(), |v| format!("{v:.digits$}"));
    for r in reports {
        out.push_str(&format!(
            "{},{:.0},{},{},{:.3},{}\n",
            r.model,
            r.file_kb,
            opt(r.quality.as_ref().map(|q| q.psnr), 2),
            opt(r.quality.as_ref().map(|q| q.ssim), 4),
            r.timing.median_ms,
            opt(r.score.as_ref().map(|s| s.value), 2),
        ));
    }
    crate::model::write_bytes(path, out.as_bytes())
}

/// Writes the report as pretty JSON, or to stdout when `path` is `-`.
pub fn write_report(path: &Path, report: &BenchReport) -> Result<()> {
    if path == Path::new("-") {
        let mut stdout = std::io::stdout().lock();
        serde_json::to_writer_pretty(&mut stdout, report).expect("report serializes");
        writeln!(stdout).map_err(Error::io("stdout"))
    } else {
        crate::model::write_json(path, report)
    }
}

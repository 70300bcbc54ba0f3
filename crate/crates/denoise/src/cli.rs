//! Command-line front end. Every command echoes its resolved configuration
//! and seed to standard error before doing any work.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use denoise_core::isp::{burst_average, synth_pair, IspParams, DEFAULT_REJECT_DB};
use denoise_core::metrics::{self, calibrate_c, ScoreConfig};
use denoise_core::train::{self, ScheduleSpec, TrainConfig, TrainMode};
use denoise_core::{Rng, Shape, Tensor};
use serde::Serialize;
use serde_json::json;

use crate::bench::{self, BenchOptions, BenchReport, WallClock, OP_THREADS};
use crate::dataset::{self, NoiseSpec, SynthRecord};
use crate::error::{Error, Result};
use crate::image::{read_image, write_image, Depth};
use crate::model::{self, Model};
use crate::history;

/// Calibration row used when no `--calibrate` is given: PSNR (dB), runtime
/// (ms) and the score it was awarded.
pub const REFERENCE_CALIBRATION: (f64, f64, f64) = (37.52, 39.0, 53.99);

#[derive(Debug, Parser)]
#[command(name = "denoise", version, about = "Train, run, benchmark and score compact denoising networks")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Thread budget for operator-internal parallelism.
    #[arg(long, global = true, env = "DENOISE_BENCH_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise one image.
    Denoise(DenoiseArgs),
    /// Train a model from a JSON config on a scene directory.
    Train(TrainArgs),
    /// Build noisy/clean pairs from clean images through the simulated camera pipeline.
    Synth(SynthArgs),
    /// Average a burst of frames into a ground-truth image.
    GtBurst(GtBurstArgs),
    /// Measure complexity and host runtime, or aggregate reports into a table.
    Bench(BenchArgs),
    /// Score predictions against ground truth with the challenge formula.
    Score(ScoreArgs),
    /// Rewrite a trained model for deployment.
    Fuse(FuseArgs),
    /// PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Write freshly initialized weights for an architecture.
    Init(InitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BitDepth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<BitDepth> for Depth {
    fn from(b: BitDepth) -> Self {
        match b {
            BitDepth::Eight => Depth::Eight,
            BitDepth::Sixteen => Depth::Sixteen,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// MAID weight file.
    #[arg(long)]
    pub model: PathBuf,
    /// Architecture JSON; defaults to the `.arch.json` beside the weights.
    #[arg(long)]
    pub arch_config: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Model> {
        model::load(&self.model, self.arch_config.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Reflect-pad to the model's size multiple and crop back afterwards.
    #[arg(long)]
    pub pad: bool,
    #[arg(long, value_enum, default_value = "8")]
    pub bit_depth: BitDepth,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TrainConfig JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory of `scene_XXXX/{noisy,clean}.png`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `model.maid`, its sidecar, `history.csv` and `config.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Teacher weights; required exactly when the mode is distill.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long)]
    pub teacher_arch: Option<PathBuf>,
    /// Scenes held out (from the end of the sorted list) for validation.
    #[arg(long, default_value_t = 1)]
    pub val_count: usize,
    /// Replace the iteration count with this many passes over the training scenes.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Single-threaded data path. Training is always run this way; the flag
    /// records the intent in the resolved config.
    #[arg(long)]
    pub strict_deterministic: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Clean source images.
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// `a,b` or `alo:ahi,blo:bhi` (log-uniform per image).
    #[arg(long)]
    pub noise: NoiseSpec,
    /// Use the default pipeline with gain 1 for every image instead of sampling a gain.
    #[arg(long)]
    pub fixed_isp: bool,
    #[arg(long, value_enum, default_value = "16")]
    pub bit_depth: BitDepth,
}

#[derive(Debug, Args)]
pub struct GtBurstArgs {
    #[arg(long)]
    pub frames_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop frames whose PSNR against the per-pixel median is below this.
    #[arg(long, default_value_t = DEFAULT_REJECT_DB, conflicts_with = "keep_all")]
    pub reject_db: f64,
    /// Average every frame.
    #[arg(long)]
    pub keep_all: bool,
    #[arg(long, value_enum, default_value = "16")]
    pub bit_depth: BitDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub w: usize,
    pub h: usize,
}

impl std::str::FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
        let dim = |t: &str| match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(format!("bad dimension '{t}'")),
        };
        Ok(Size {
            w: dim(w)?,
            h: dim(h)?,
        })
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, required_unless_present = "csv")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub arch_config: Option<PathBuf>,
    /// Input size as WxH.
    #[arg(long, default_value = "720x480")]
    pub size: Size,
    #[arg(long, default_value_t = bench::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
    pub warmup: usize,
    /// Report path, or `-` for standard output.
    #[arg(long, default_value = "-")]
    pub report: PathBuf,
    /// Scene directory to measure PSNR/SSIM on.
    #[arg(long)]
    pub eval_dir: Option<PathBuf>,
    /// Name shown in the report; defaults to the weight file stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Score normalization constant; defaults to the reference calibration.
    #[arg(long)]
    pub score_c: Option<f64>,
    /// Aggregate the given reports into a leaderboard CSV at this path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Report files to aggregate with `--csv`.
    #[arg(requires = "csv")]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub psnr: f64,
    pub ms: f64,
    pub score: f64,
}

impl std::str::FromStr for Calibration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'")))
            .collect::<Result<_, _>>()?;
        match v[..] {
            [psnr, ms, score] => Ok(Calibration { psnr, ms, score }),
            _ => Err(format!("expected psnr,ms,score, got '{s}'")),
        }
    }
}

impl Calibration {
    pub fn reference() -> Self {
        let (psnr, ms, score) = REFERENCE_CALIBRATION;
        Calibration { psnr, ms, score }
    }

    pub fn config(&self) -> Result<ScoreConfig> {
        Ok(calibrate_c(self.psnr, self.ms, self.score)?)
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub runtime_ms: f64,
    /// Derive C from a row with known PSNR, runtime and score.
    #[arg(long)]
    pub calibrate: Option<Calibration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    /// Fold asymmetric 1x3/3x1 branches into their 3x3 kernels.
    Asym,
    /// Remove the super-network head, keeping the sub-network.
    Detach,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub arch_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub pass: Pass,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub arch_config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Prints the resolved configuration as one JSON line on standard error.
fn announce(command: &str, seed: Option<u64>, config: serde_json::Value) {
    let line = json!({ "command": command, "seed": seed, "config": config });
    eprintln!("resolved {line}");
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        if t != OP_THREADS {
            log::warn!("operators are single-threaded; --threads {t} runs with {OP_THREADS}");
        }
    }
    match &cli.command {
        Command::Denoise(a) => denoise(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Synth(a) => synth(cli, a),
        Command::GtBurst(a) => gt_burst(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::Score(a) => score(cli, a),
        Command::Fuse(a) => fuse(cli, a),
        Command::Metrics(a) => metrics_cmd(cli, a),
        Command::Init(a) => init(cli, a),
    }
}

/// Runs the model on one `(1, H, W, 3)` image, optionally padding to the
/// size multiple and cropping back.
pub fn denoise_image(m: &Model, img: &Tensor<f32>, pad: bool) -> Result<Tensor<f32>> {
    let s = img.shape();
    let k = m.graph.meta().downsample;
    let (ph, pw) = ((k - s.h % k) % k, (k - s.w % k) % k);
    if !pad || (ph, pw) == (0, 0) {
        return Ok(m.graph.forward(img)?.clamp(0.0, 1.0));
    }
    let out = m.graph.forward(&img.reflect_pad(ph, pw)?)?;
    Ok(out.crop(0, 0, s.h, s.w)?.clamp(0.0, 1.0))
}

fn denoise(cli: &Cli, a: &DenoiseArgs) -> Result<()> {
    let m = a.model.load()?;
    announce(
        "denoise",
        cli.seed,
        json!({
            "model": path_str(&a.model.model),
            "arch": m.arch,
            "input": path_str(&a.input),
            "output": path_str(&a.output),
            "pad": a.pad,
        }),
    );
    let img = read_image(&a.input)?;
    let out = denoise_image(&m, &img, a.pad)?;
    write_image(&a.output, &out, a.bit_depth.into())?;
    log::info!("wrote {}", a.output.display());
    Ok(())
}

/// Output files of a training run.
pub struct TrainOutputs {
    pub weights: PathBuf,
    pub history: PathBuf,
    pub config: PathBuf,
}

impl TrainOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            weights: dir.join("model.maid"),
            history: dir.join("history.csv"),
            config: dir.join("config.json"),
        }
    }
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = model::read_json(&a.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let data = dataset::load_dataset(&a.data, a.val_count)?;
    if let Some(epochs) = a.epochs {
        let iters = (epochs * data.train.len() as u64).div_ceil(cfg.batch_size as u64);
        cfg.iterations = iters.max(1);
        if let ScheduleSpec::Cosine { total, .. } = &mut cfg.schedule {
            *total = cfg.iterations;
        }
    }
    cfg.validate()?;
    let distill = matches!(cfg.mode, TrainMode::Distill { .. });
    let teacher = match (&a.teacher, distill) {
        (Some(t), true) => Some(model::load(t, a.teacher_arch.as_deref())?.graph),
        (None, true) => return Err(Error::Config("distill mode needs --teacher".into())),
        (Some(_), false) => {
            return Err(Error::Config("--teacher is only valid in distill mode".into()))
        }
        (None, false) => None,
    };
    announce(
        "train",
        Some(cfg.seed),
        json!({
            "train": cfg,
            "data": path_str(&a.data),
            "train_scenes": data.train.len(),
            "val_scenes": data.val.len(),
            "out": path_str(&a.out),
            "teacher": a.teacher.as_deref().map(path_str),
            "strict_deterministic": a.strict_deterministic,
        }),
    );
    let out = train::train(&cfg, &data, teacher.as_ref())?;
    for r in &out.history {
        log::info!(
            "iter {:>6}  lr {:.2e}  loss {:.6}  val psnr {:.3} dB",
            r.iter,
            r.lr,
            r.loss,
            r.val_psnr
        );
    }
    let files = TrainOutputs::in_dir(&a.out);
    let mut arch = cfg.arch.clone();
    if out.detached_at.is_some() {
        arch.detached = true;
    }
    model::save(
        &files.weights,
        &Model {
            arch,
            graph: out.graph,
        },
    )?;
    history::write(&files.history, &out.history)?;
    model::write_json(&files.config, &cfg)?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let sources = dataset::list_images(&a.input_dir)?;
    if sources.is_empty() {
        return Err(Error::Config(format!(
            "no images in {}",
            a.input_dir.display()
        )));
    }
    announce(
        "synth",
        Some(seed),
        json!({
            "input_dir": path_str(&a.input_dir),
            "output_dir": path_str(&a.output_dir),
            "noise": format!("{:?}", a.noise),
            "fixed_isp": a.fixed_isp,
            "images": sources.len(),
        }),
    );
    for (i, src) in sources.iter().enumerate() {
        let mut params_rng = Rng::derive(seed, u64::MAX - i as u64);
        let isp = if a.fixed_isp {
            IspParams::default()
        } else {
            IspParams::sample(&mut params_rng)
        };
        let record = SynthRecord {
            source: std::path::absolute(src).map_err(Error::io(src))?,
            seed,
            index: i as u64,
            isp,
            noise: a.noise.draw(&mut params_rng)?,
        };
        let img = read_image(src)?;
        let (noisy, clean) = synth_pair(&img, &isp, &record.noise, &mut Rng::derive(seed, i as u64))?;
        let pair = train::Pair { noisy, clean };
        dataset::write_pair(
            &dataset::scene_dir(&a.output_dir, i),
            &pair,
            Some(&record),
            a.bit_depth.into(),
        )?;
    }
    log::info!("wrote {} scene(s) to {}", sources.len(), a.output_dir.display());
    Ok(())
}

fn gt_burst(cli: &Cli, a: &GtBurstArgs) -> Result<()> {
    let paths = dataset::list_images(&a.frames_dir)?;
    let reject = (!a.keep_all).then_some(a.reject_db);
    announce(
        "gt-burst",
        cli.seed,
        json!({
            "frames_dir": path_str(&a.frames_dir),
            "frames": paths.len(),
            "reject_db": reject,
            "out": path_str(&a.out),
        }),
    );
    let frames = paths.iter().map(read_image).collect::<Result<Vec<_>>>()?;
    let burst = burst_average(&frames, reject)?;
    write_image(&a.out, &burst.image, a.bit_depth.into())?;
    let summary = json!({
        "kept": burst.kept.iter().map(|&i| path_str(&paths[i])).collect::<Vec<_>>(),
        "frame_psnr": burst.frame_psnr,
    });
    println!("{summary}");
    Ok(())
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> Result<()> {
    if let Some(csv) = &a.csv {
        announce(
            "bench",
            cli.seed,
            json!({ "csv": path_str(csv), "reports": a.reports.iter().map(|p| path_str(p)).collect::<Vec<_>>() }),
        );
        let reports = a
            .reports
            .iter()
            .map(model::read_json::<BenchReport>)
            .collect::<Result<Vec<_>>>()?;
        return bench::write_leaderboard(csv, &reports);
    }
    let path = a.model.as_ref().expect("clap requires --model");
    let m = model::load(path, a.arch_config.as_deref())?;
    let opts = BenchOptions {
        input: Shape::new(1, a.size.h, a.size.w, 3)?,
        runs: a.runs,
        warmup: a.warmup,
        seed: cli.seed.unwrap_or(0),
    };
    let score_cfg = match a.score_c {
        Some(c) => ScoreConfig { c },
        None => Calibration::reference().config()?,
    };
    announce(
        "bench",
        Some(opts.seed),
        json!({
            "model": path_str(path),
            "arch": m.arch,
            "size": format!("{}x{}", a.size.w, a.size.h),
            "runs": a.runs,
            "warmup": a.warmup,
            "threads": OP_THREADS,
            "eval_dir": a.eval_dir.as_deref().map(path_str),
            "score_c": score_cfg.c,
        }),
    );
    let name = a.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
    });
    let mut report = bench::benchmark(&name, &m.graph, &opts, &mut WallClock)?;
    if let Some(dir) = &a.eval_dir {
        let pairs = dataset::list_scenes(dir)?
            .iter()
            .map(|s| dataset::read_pair(s))
            .collect::<Result<Vec<_>>>()?;
        report.quality = Some(bench::evaluate(&m.graph, &pairs)?);
        bench::attach_score(&mut report, &score_cfg)?;
    }
    bench::write_report(&a.report, &report)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ScoreSummary {
    pub images: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub runtime_ms: f64,
    pub c: f64,
    pub score: f64,
}

/// Pairs every prediction with the ground-truth file of the same name.
fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let calib = a.calibrate.unwrap_or_else(Calibration::reference);
    let cfg = calib.config()?;
    announce(
        "score",
        cli.seed,
        json!({
            "pred_dir": path_str(&a.pred_dir),
            "gt_dir": path_str(&a.gt_dir),
            "runtime_ms": a.runtime_ms,
            "calibration": [calib.psnr, calib.ms, calib.score],
            "c": cfg.c,
        }),
    );
    let preds = dataset::list_images(&a.pred_dir)?;
    if preds.is_empty() {
        return Err(Error::Config(format!("no images in {}", a.pred_dir.display())));
    }
    let mut failures = Vec::new();
    let (mut psnr, mut ssim, mut n) = (0.0, 0.0, 0usize);
    for p in &preds {
        let gt = a.gt_dir.join(p.file_name().expect("listed files have names"));
        let pair = read_image(p).and_then(|x| Ok((x, read_image(&gt)?)));
        match pair.and_then(|(x, y)| Ok((metrics::psnr(&x, &y)?, metrics::ssim(&x, &y)?))) {
            Ok((ps, ss)) => {
                psnr += ps;
                ssim += ss;
                n += 1;
            }
            Err(e) => failures.push(format!("{}: {e}", p.display())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Batch(failures));
    }
    let psnr = psnr / n as f64;
    let summary = ScoreSummary {
        images: n,
        psnr,
        ssim: ssim / n as f64,
        runtime_ms: a.runtime_ms,
        c: cfg.c,
        score: metrics::final_score(psnr, a.runtime_ms, &cfg)?,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn fuse(cli: &Cli, a: &FuseArgs) -> Result<()> {
    let m = model::load(&a.input, a.arch_config.as_deref())?;
    announce(
        "fuse",
        cli.seed,
        json!({ "in": path_str(&a.input), "out": path_str(&a.out), "pass": a.pass, "arch": m.arch }),
    );
    let mut arch = m.arch.clone();
    let graph = match a.pass {
        Pass::Asym => {
            arch.asym = false;
            m.graph.fuse_asym()?
        }
        Pass::Detach => {
            arch.detached = true;
            m.graph.detach_supernet()?
        }
    };
    let out = Model { arch, graph };
    model::save(&a.out, &out)?;
    // The rewritten weights must load against the rewritten architecture.
    model::load(&a.out, None)?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}

fn metrics_cmd(cli: &Cli, a: &MetricsArgs) -> Result<()> {
    announce("metrics", cli.seed, json!({ "a": path_str(&a.a), "b": path_str(&a.b) }));
    let (x, y) = (read_image(&a.a)?, read_image(&a.b)?);
    let out = json!({ "psnr": metrics::psnr(&x, &y)?, "ssim": metrics::ssim(&x, &y)? });
    println!("{out}");
    Ok(())
}

fn init(cli: &Cli, a: &InitArgs) -> Result<()> {
    let arch = model::read_arch(&a.arch_config)?;
    let seed = cli.seed.unwrap_or(0);
    announce("init", Some(seed), json!({ "arch": arch, "out": path_str(&a.out) }));
    let graph = denoise_core::zoo::build(&arch, seed)?;
    model::save(&a.out, &Model { arch, graph })
}

use std::path::Path;
use std::process::{Command, Output};

use denoise::bench::BenchReport;
use denoise::cli::ScoreSummary;
use denoise::dataset::{read_record, scene_dir};
use denoise::image::{read_image, write_image, Depth};
use denoise::model::{self, Model};
use denoise_core::zoo::{build, Activation, Arch, ArchConfig};
use denoise_core::{Rng, Tensor};

fn denoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_denoise"))
        .args(args)
        .env_remove("DENOISE_BENCH_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = denoise(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_image(seed: u64, h: usize, w: usize) -> Tensor<f32> {
    Tensor::uniform(&mut Rng::new(seed), (1, h, w, 3), 0.0, 1.0).unwrap()
}

/// A mier net whose last layer is zeroed: with the global skip it returns its input.
fn identity_model(path: &Path) {
    let mut arch = ArchConfig::default_for(Arch::MierSmallunet);
    arch.asym = false;
    let mut graph = build(&arch, 0).unwrap();
    for name in ["up1.w", "up1.b"] {
        for v in graph.params_mut().get_mut(name).unwrap().data_mut() {
            *v = 0.0;
        }
    }
    model::save(path, &Model { arch, graph }).unwrap();
}

fn small_megvii() -> ArchConfig {
    let mut a = ArchConfig::default_for(Arch::MegviiSplitdec);
    a.base_channels = 8;
    a.depth = 2;
    a
}

#[test]
fn identity_model_hits_the_psnr_cap() {
    let dir = tempfile::tempdir().unwrap();
    let (m, input, output) = (dir.path().join("id.maid"), dir.path().join("in.png"), dir.path().join("out.png"));
    identity_model(&m);
    write_image(&input, &random_image(1, 24, 32), Depth::Eight).unwrap();
    let run = ok(&["denoise", "--model", s(&m), "--input", s(&input), "--output", s(&output)]);
    assert!(stderr(&run).contains("resolved"));
    let metrics = ok(&["metrics", s(&input), s(&output)]);
    let v: serde_json::Value = serde_json::from_slice(&metrics.stdout).unwrap();
    assert_eq!(v["psnr"], 100.0);
    assert_eq!(v["ssim"], 1.0);
}

#[test]
fn padding_handles_odd_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let (m, input, output) = (dir.path().join("id.maid"), dir.path().join("in.png"), dir.path().join("out.png"));
    identity_model(&m);
    write_image(&input, &random_image(2, 23, 30), Depth::Eight).unwrap();
    let args = ["denoise", "--model", s(&m), "--input", s(&input), "--output", s(&output)];
    let bad = denoise(&args);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("error[shape]"), "{}", stderr(&bad));
    ok(&[&args[..], &["--pad"]].concat());
    let back = read_image(&output).unwrap();
    assert_eq!(back, read_image(&input).unwrap());
}

#[test]
fn missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.maid");
    let out = denoise(&["denoise", "--model", s(&missing), "--input", "x.png", "--output", "y.png"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error[io]") && err.contains("nowhere.maid"), "{err}");
}

#[test]
fn zero_noise_synth_gives_identical_pairs_and_regenerates() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = (dir.path().join("src"), dir.path().join("dst"));
    for i in 0..2 {
        write_image(src.join(format!("img{i}.png")), &random_image(i, 16, 20), Depth::Eight).unwrap();
    }
    ok(&["synth", "--input-dir", s(&src), "--output-dir", s(&dst), "--noise", "0,0", "--seed", "3"]);
    for i in 0..2 {
        let scene = scene_dir(&dst, i);
        let noisy = std::fs::read(scene.join("noisy.png")).unwrap();
        assert_eq!(noisy, std::fs::read(scene.join("clean.png")).unwrap());
    }

    let noisy_dst = dir.path().join("noisy");
    ok(&["synth", "--input-dir", s(&src), "--output-dir", s(&noisy_dst), "--noise", "0.01,1e-4", "--seed", "3"]);
    let scene = scene_dir(&noisy_dst, 1);
    let (noisy, clean) = read_record(&scene).unwrap().regenerate().unwrap();
    // Files are 16-bit, so regeneration matches to within half a code.
    let tol = 0.5 / 65535.0 + 1e-7;
    assert!(noisy.max_abs_diff(&read_image(scene.join("noisy.png")).unwrap()).unwrap() <= tol);
    assert!(clean.max_abs_diff(&read_image(scene.join("clean.png")).unwrap()).unwrap() <= tol);
    assert!(noisy.max_abs_diff(&clean).unwrap() > 0.01);

    let bad = denoise(&["synth", "--input-dir", s(&src), "--output-dir", s(&dst), "--noise", "-0.1,0"]);
    assert!(!bad.status.success());
}

fn write_train_config(path: &Path, arch: ArchConfig, mode: serde_json::Value) {
    let cfg = serde_json::json!({
        "arch": arch,
        "loss": { "kind": "l2" },
        "batch_size": 2,
        "patch_size": 16,
        "iterations": 4,
        "schedule": { "kind": "cosine", "lr_max": 1e-3, "lr_min": 1e-5, "total": 4 },
        "mode": mode,
        "seed": 5,
        "val_every": 2
    });
    std::fs::write(path, cfg.to_string()).unwrap();
}

fn small_dataset(root: &Path) {
    let mut rng = Rng::new(9);
    for i in 0..3 {
        let clean: Tensor<f32> = Tensor::uniform(&mut rng, (1, 24, 24, 3), 0.2, 0.8).unwrap();
        let noisy = clean.map(|v| (v + 0.05).min(1.0));
        write_image(scene_dir(root, i).join("noisy.png"), &noisy, Depth::Sixteen).unwrap();
        write_image(scene_dir(root, i).join("clean.png"), &clean, Depth::Sixteen).unwrap();
    }
}

#[test]
fn train_writes_history_and_checks_teacher_usage() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_dataset(&data);
    let plain = dir.path().join("plain.json");
    write_train_config(&plain, small_megvii(), serde_json::json!({ "kind": "plain" }));
    let out = dir.path().join("run");
    let run = ok(&["train", "--config", s(&plain), "--data", s(&data), "--out", s(&out)]);
    assert!(stderr(&run).contains("\"seed\":5"));
    let csv = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.starts_with("iter,lr,loss,val_psnr,val_ssim\n"));
    model::load(out.join("model.maid"), None).unwrap();

    let teacher = out.join("model.maid");
    let wrong = denoise(&["train", "--config", s(&plain), "--data", s(&data), "--out", s(&out), "--teacher", s(&teacher)]);
    assert!(stderr(&wrong).contains("error[config]"));

    let distill = dir.path().join("distill.json");
    write_train_config(&distill, small_megvii(), serde_json::json!({ "kind": "distill", "alpha_kd": 0.5 }));
    let missing = denoise(&["train", "--config", s(&distill), "--data", s(&data), "--out", s(&out)]);
    assert!(stderr(&missing).contains("--teacher"));
    ok(&["train", "--config", s(&distill), "--data", s(&data), "--out", s(&dir.path().join("kd")), "--teacher", s(&teacher)]);
}

#[test]
fn bench_reports_and_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.maid");
    let arch = small_megvii();
    model::save(&m, &Model { graph: build(&arch, 0).unwrap(), arch }).unwrap();
    let report = dir.path().join("r.json");
    ok(&["bench", "--model", s(&m), "--runs", "2", "--warmup", "0", "--report", s(&report)]);
    let r: BenchReport = model::read_json(&report).unwrap();
    assert_eq!(r.input_shape, [1, 480, 720, 3]);
    assert_eq!(r.timing.runs, 2);
    assert!(r.timing.median_ms <= r.timing.p95_ms);
    assert_eq!(r.file_kb * 1024.0, std::fs::metadata(&m).unwrap().len() as f64);

    let zero = denoise(&["bench", "--model", s(&m), "--runs", "0", "--report", s(&report)]);
    assert!(!zero.status.success());

    let csv = dir.path().join("board.csv");
    ok(&["bench", "--csv", s(&csv), s(&report), s(&report)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("name,size_kb,psnr,ssim,runtime_ms,score"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn thread_env_fallback_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_denoise"))
        .args(["metrics", "a.png", "b.png"])
        .env("DENOISE_BENCH_THREADS", "0")
        .output()
        .unwrap();
    assert!(stderr(&out).contains("--threads must be at least 1"));
}

/// Writes a gt image of 0.5 and a prediction offset by `k / 65535`, so the
/// PSNR is exactly `-20 log10(k / 65535)`.
fn offset_pair(dir: &Path, k: u16) -> f64 {
    let (pred, gt) = (dir.join("pred"), dir.join("gt"));
    let base = 32768.0 / 65535.0;
    let off = k as f64 / 65535.0;
    write_image(gt.join("a.png"), &Tensor::full((1, 16, 16, 3), base as f32).unwrap(), Depth::Sixteen).unwrap();
    write_image(pred.join("a.png"), &Tensor::full((1, 16, 16, 3), (base + off) as f32).unwrap(), Depth::Sixteen).unwrap();
    -20.0 * off.log10()
}

#[test]
fn score_reproduces_table_rows() {
    // (PSNR, runtime ms, reference score).
    let rows = [(37.83, 84.0, 38.52), (36.33, 11.0, 36.77), (37.37, 54.0, 31.67)];
    for (psnr, ms, expected) in rows {
        let dir = tempfile::tempdir().unwrap();
        let k = (65535.0 * 10f64.powf(-psnr / 20.0)).round() as u16;
        let exact = offset_pair(dir.path(), k);
        let out = ok(&[
            "score",
            "--pred-dir",
            s(&dir.path().join("pred")),
            "--gt-dir",
            s(&dir.path().join("gt")),
            "--runtime-ms",
            &ms.to_string(),
            "--calibrate",
            "37.52,39,53.99",
        ]);
        let sum: ScoreSummary = serde_json::from_slice(&out.stdout).unwrap();
        // Pixel values pass through f32, which moves the PSNR by ~1e-5 dB.
        assert!((sum.psnr - exact).abs() < 1e-4, "{} vs {exact}", sum.psnr);
        // Independent evaluation of 2^(2 psnr) / (C t) with C from the reference row.
        let c = 2f64.powf(2.0 * 37.52) / (53.99 * 39.0);
        assert!((sum.c - c).abs() <= 1e-9 * c);
        let oracle = 2f64.powf(2.0 * sum.psnr) / (c * ms);
        assert!((sum.score - oracle).abs() <= 1e-9 * oracle);
        assert!((sum.score - expected).abs() <= 0.02 * expected, "{} vs {expected}", sum.score);
    }
}

#[test]
fn score_lists_every_missing_pair() {
    let dir = tempfile::tempdir().unwrap();
    offset_pair(dir.path(), 100);
    for name in ["b.png", "c.png"] {
        write_image(dir.path().join("pred").join(name), &random_image(0, 16, 16), Depth::Eight).unwrap();
    }
    let out = denoise(&[
        "score",
        "--pred-dir",
        s(&dir.path().join("pred")),
        "--gt-dir",
        s(&dir.path().join("gt")),
        "--runtime-ms",
        "10",
    ]);
    let err = stderr(&out);
    assert!(err.contains("error[batch]: 2 file(s)"), "{err}");
    assert!(err.contains("b.png") && err.contains("c.png"));
}

#[test]
fn fuse_asym_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (m, f) = (dir.path().join("m.maid"), dir.path().join("f.maid"));
    let mut arch = ArchConfig::default_for(Arch::MierSmallunet);
    arch.activation = Activation::Prelu;
    let graph = build(&arch, 4).unwrap();
    model::save(&m, &Model { arch, graph }).unwrap();
    ok(&["fuse", "--in", s(&m), "--out", s(&f), "--pass", "asym"]);
    let (a, b) = (model::load(&m, None).unwrap(), model::load(&f, None).unwrap());
    assert!(!b.arch.asym);
    assert!(std::fs::metadata(&f).unwrap().len() < std::fs::metadata(&m).unwrap().len());
    let x = random_image(5, 32, 32);
    let d = a.graph.forward(&x).unwrap().max_abs_diff(&b.graph.forward(&x).unwrap()).unwrap();
    let scale = a.graph.forward(&x).unwrap().data().iter().fold(0f32, |m, v| m.max(v.abs()));
    // Untrained He-init outputs reach the hundreds, where one f32 ulp exceeds 1e-5.
    assert!(d <= 1e-5 * (scale as f64).max(1.0), "{d} at output scale {scale}");

    let bad = denoise(&["fuse", "--in", s(&m), "--out", s(&f), "--pass", "detach"]);
    assert!(!bad.status.success());
}

#[test]
fn fuse_detach_keeps_subnet() {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = (dir.path().join("m.maid"), dir.path().join("d.maid"));
    let arch = ArchConfig::default_for(Arch::EnerzaiJoint);
    model::save(&m, &Model { graph: build(&arch, 1).unwrap(), arch }).unwrap();
    ok(&["fuse", "--in", s(&m), "--out", s(&d), "--pass", "detach"]);
    let (full, sub) = (model::load(&m, None).unwrap(), model::load(&d, None).unwrap());
    assert!(sub.arch.detached);
    let x = random_image(6, 16, 16);
    let outs = full.graph.forward_outputs(&x).unwrap();
    assert_eq!(outs[full.graph.output_index("sub").unwrap()], sub.graph.forward(&x).unwrap());
}

#[test]
fn gt_burst_averages_frames() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let clean = Tensor::full((1, 16, 16, 3), 0.5f32).unwrap();
    let mut rng = Rng::new(3);
    for i in 0..8 {
        let noise: Tensor<f32> = Tensor::normal(&mut rng, (1, 16, 16, 3), 0.0, 0.02).unwrap();
        write_image(frames.join(format!("f{i}.png")), &clean.add(&noise).unwrap(), Depth::Sixteen).unwrap();
    }
    let out = dir.path().join("gt.png");
    let run = ok(&["gt-burst", "--frames-dir", s(&frames), "--out", s(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(v["kept"].as_array().unwrap().len(), 8);
    let avg = read_image(&out).unwrap();
    assert!(avg.max_abs_diff(&clean).unwrap() < 0.06);
}

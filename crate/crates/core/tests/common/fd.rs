//! Central finite-difference checks of every backward pass and loss gradient.
//!
//! Each case builds a scalar `L = <op(inputs), r>` for a random `r`, asks the
//! backward pass for `dL/d(input)` and compares every tensor against central
//! differences. Tensors with more than `MAX_COORDS` entries are checked on a
//! random subset plus one random direction covering all entries.

use denoise_core::graph::{GraphBuilder, GraphMeta};
use denoise_core::ops::{self, AsymParams, ConvParams, Padding};
use denoise_core::train::loss::{loss, LossSpec, MixTerm};
use denoise_core::{Rng, Shape, Tensor};

use super::{distinct, off_zero, shape, uniform64};

pub const STEP: f64 = 1e-4;
pub const MAX_COORDS: usize = 48;
/// Denominator floor: near-zero gradients must agree to `1e-10` absolute.
pub const FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Worst relative error of `grad` against central differences of `f` at `x`.
pub fn check(
    rng: &mut Rng,
    x: &Tensor<f64>,
    grad: &Tensor<f64>,
    f: impl Fn(&Tensor<f64>) -> f64,
) -> f64 {
    assert_eq!(x.shape(), grad.shape());
    let len = x.len();
    let coords: Vec<usize> = if len <= MAX_COORDS {
        (0..len).collect()
    } else {
        (0..MAX_COORDS).map(|_| rng.index(len)).collect()
    };
    let mut worst = 0.0f64;
    for i in coords {
        let mut p = x.clone();
        p.data_mut()[i] += STEP;
        let mut m = x.clone();
        m.data_mut()[i] -= STEP;
        let num = (f(&p) - f(&m)) / (2.0 * STEP);
        worst = worst.max(rel_err(grad.data()[i], num));
    }
    let dir: Vec<f64> = (0..len).map(|_| rng.standard_normal()).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut p = x.clone();
    let mut m = x.clone();
    for ((pv, mv), d) in p.data_mut().iter_mut().zip(m.data_mut()).zip(&dir) {
        *pv += STEP * d / norm;
        *mv -= STEP * d / norm;
    }
    let num = (f(&p) - f(&m)) / (2.0 * STEP);
    let ana: f64 = grad.data().iter().zip(&dir).map(|(g, d)| g * d / norm).sum();
    worst.max(rel_err(ana, num))
}

fn dot(a: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    a.dot(r).unwrap()
}

type Case = fn(u64) -> f64;

fn conv_case(seed: u64, s: Shape, kh: usize, kw: usize, cout: usize, stride: usize, groups: usize, padding: Padding) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, s, -1.0, 1.0);
    let k = uniform64(&mut rng, shape(kh, kw, s.c / groups, cout), -0.5, 0.5);
    let b = uniform64(&mut rng, shape(1, 1, 1, cout), -0.5, 0.5);
    fn params<'a>(k: &'a Tensor<f64>, b: &'a Tensor<f64>, s: usize, g: usize, p: Padding) -> ConvParams<'a, f64> {
        ConvParams {
            padding: p,
            ..ConvParams::same(k, Some(b)).with_stride(s).with_groups(g)
        }
    }
    let out = ops::conv2d(&x, &params(&k, &b, stride, groups, padding)).unwrap().shape();
    let r = uniform64(&mut rng, out, -1.0, 1.0);
    let run = |x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&ops::conv2d(x, &params(k, b, stride, groups, padding)).unwrap(), &r)
    };
    let gr = ops::conv2d_backward(&x, &params(&k, &b, stride, groups, padding), &r).unwrap();
    check(&mut rng, &x, &gr.input, |t| run(t, &k, &b))
        .max(check(&mut rng, &k, &gr.kernel, |t| run(&x, t, &b)))
        .max(check(&mut rng, &b, &gr.bias, |t| run(&x, &k, t)))
}

fn conv3(seed: u64) -> f64 {
    conv_case(seed, shape(2, 5, 6, 3), 3, 3, 4, 1, 1, Padding::Same)
}
fn conv_strided(seed: u64) -> f64 {
    conv_case(seed, shape(1, 7, 6, 2), 3, 3, 3, 2, 1, Padding::Same)
}
fn conv_grouped(seed: u64) -> f64 {
    conv_case(seed, shape(1, 5, 5, 4), 3, 3, 6, 1, 2, Padding::Same)
}
fn conv_depthwise(seed: u64) -> f64 {
    conv_case(seed, shape(1, 6, 5, 3), 3, 3, 3, 1, 3, Padding::Same)
}
fn conv_rect_valid(seed: u64) -> f64 {
    conv_case(seed, shape(1, 6, 7, 2), 1, 3, 3, 1, 1, Padding::Valid)
}
fn conv_1x1(seed: u64) -> f64 {
    conv_case(seed, shape(2, 3, 4, 5), 1, 1, 2, 1, 1, Padding::Same)
}

fn transposed_case(seed: u64, k: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, shape(1, 3, 4, 3), -1.0, 1.0);
    let w = uniform64(&mut rng, shape(k, k, 2, 3), -0.5, 0.5);
    let b = uniform64(&mut rng, shape(1, 1, 1, 2), -0.5, 0.5);
    let r = uniform64(&mut rng, shape(1, 6, 8, 2), -1.0, 1.0);
    let run = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        dot(&ops::conv2d_transposed(x, &ConvParams::same(w, Some(b)).with_stride(2)).unwrap(), &r)
    };
    let gr = ops::conv2d_transposed_backward(&x, &ConvParams::same(&w, Some(&b)).with_stride(2), &r).unwrap();
    check(&mut rng, &x, &gr.input, |t| run(t, &w, &b))
        .max(check(&mut rng, &w, &gr.kernel, |t| run(&x, t, &b)))
        .max(check(&mut rng, &b, &gr.bias, |t| run(&x, &w, t)))
}

fn transposed2(seed: u64) -> f64 {
    transposed_case(seed, 2)
}
fn transposed3(seed: u64) -> f64 {
    transposed_case(seed, 3)
}

fn separable(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let c = 3;
    let x = uniform64(&mut rng, shape(1, 5, 5, c), -1.0, 1.0);
    let dw = uniform64(&mut rng, shape(3, 3, 1, c), -0.5, 0.5);
    let dwb = uniform64(&mut rng, shape(1, 1, 1, c), -0.5, 0.5);
    let pw = uniform64(&mut rng, shape(1, 1, c, 4), -0.5, 0.5);
    let pwb = uniform64(&mut rng, shape(1, 1, 1, 4), -0.5, 0.5);
    let r = uniform64(&mut rng, shape(1, 5, 5, 4), -1.0, 1.0);
    let run = |x: &Tensor<f64>, dw: &Tensor<f64>, pw: &Tensor<f64>| {
        let d = ConvParams::same(dw, Some(&dwb)).with_groups(c);
        let p = ConvParams::same(pw, Some(&pwb));
        dot(&ops::separable_conv(x, &d, &p).unwrap(), &r)
    };
    let d = ConvParams::same(&dw, Some(&dwb)).with_groups(c);
    let p = ConvParams::same(&pw, Some(&pwb));
    let mid = ops::conv2d(&x, &d).unwrap();
    let gp = ops::conv2d_backward(&mid, &p, &r).unwrap();
    let gd = ops::conv2d_backward(&x, &d, &gp.input).unwrap();
    check(&mut rng, &x, &gd.input, |t| run(t, &dw, &pw))
        .max(check(&mut rng, &dw, &gd.kernel, |t| run(&x, t, &pw)))
        .max(check(&mut rng, &pw, &gp.kernel, |t| run(&x, &dw, t)))
}

fn asym(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (ci, co) = (2, 3);
    let x = uniform64(&mut rng, shape(1, 5, 4, ci), -1.0, 1.0);
    let t = [
        uniform64(&mut rng, shape(3, 3, ci, co), -0.5, 0.5),
        uniform64(&mut rng, shape(1, 1, 1, co), -0.5, 0.5),
        uniform64(&mut rng, shape(1, 3, ci, co), -0.5, 0.5),
        uniform64(&mut rng, shape(1, 1, 1, co), -0.5, 0.5),
        uniform64(&mut rng, shape(3, 1, ci, co), -0.5, 0.5),
        uniform64(&mut rng, shape(1, 1, 1, co), -0.5, 0.5),
    ];
    let r = uniform64(&mut rng, shape(1, 5, 4, co), -1.0, 1.0);
    let run = |x: &Tensor<f64>, t: &[Tensor<f64>; 6]| {
        let p = AsymParams { w3: &t[0], b3: &t[1], w13: &t[2], b13: &t[3], w31: &t[4], b31: &t[5] };
        dot(&ops::asym_conv_forward(x, &p).unwrap(), &r)
    };
    let p = AsymParams { w3: &t[0], b3: &t[1], w13: &t[2], b13: &t[3], w31: &t[4], b31: &t[5] };
    let (gx, br) = ops::asym_conv_backward(&x, &p, &r).unwrap();
    let grads = [
        br[0].kernel.clone(),
        br[0].bias.clone(),
        br[1].kernel.clone(),
        br[1].bias.clone(),
        br[2].kernel.clone(),
        br[2].bias.clone(),
    ];
    let mut worst = check(&mut rng, &x, &gx, |v| run(v, &t));
    for i in 0..6 {
        let base = t.clone();
        worst = worst.max(check(&mut rng, &base[i], &grads[i], |v| {
            let mut tt = base.clone();
            tt[i] = v.clone();
            run(&x, &tt)
        }));
    }
    worst
}

fn relu(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = off_zero(&mut rng, shape(1, 4, 4, 3));
    let r = uniform64(&mut rng, x.shape(), -1.0, 1.0);
    let g = ops::relu_backward(&x, &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::relu(t), &r))
}

fn prelu(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = off_zero(&mut rng, shape(1, 4, 4, 3));
    let a = uniform64(&mut rng, shape(1, 1, 1, 3), 0.05, 0.5);
    let r = uniform64(&mut rng, x.shape(), -1.0, 1.0);
    let (gx, ga) = ops::prelu_backward(&x, &a, &r).unwrap();
    check(&mut rng, &x, &gx, |t| dot(&ops::prelu(t, &a).unwrap(), &r))
        .max(check(&mut rng, &a, &ga, |t| dot(&ops::prelu(&x, t).unwrap(), &r)))
}

fn sigmoid(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, shape(1, 4, 4, 3), -4.0, 4.0);
    let r = uniform64(&mut rng, x.shape(), -1.0, 1.0);
    let g = ops::sigmoid_backward(&ops::sigmoid(&x), &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::sigmoid(t), &r))
}

fn maxpool(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = distinct(&mut rng, shape(2, 4, 6, 2));
    let r = uniform64(&mut rng, shape(2, 2, 3, 2), -1.0, 1.0);
    let g = ops::maxpool2_backward(&x, &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::maxpool2(t).unwrap(), &r))
}

fn upsample_nearest(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, shape(1, 3, 4, 2), -1.0, 1.0);
    let r = uniform64(&mut rng, shape(1, 6, 8, 2), -1.0, 1.0);
    let g = ops::upsample_nearest2_backward(x.shape(), &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::upsample_nearest2(t).unwrap(), &r))
}

fn upsample_bilinear(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, shape(1, 3, 4, 2), -1.0, 1.0);
    let r = uniform64(&mut rng, shape(1, 6, 8, 2), -1.0, 1.0);
    let g = ops::upsample_bilinear2_backward(x.shape(), &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::upsample_bilinear2(t).unwrap(), &r))
}

fn global_pool(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, shape(2, 3, 4, 3), -1.0, 1.0);
    let r = uniform64(&mut rng, shape(2, 1, 1, 3), -1.0, 1.0);
    let g = ops::global_avg_pool_backward(x.shape(), &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::global_avg_pool(t).unwrap(), &r))
}

fn concat(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let a = uniform64(&mut rng, shape(1, 3, 3, 2), -1.0, 1.0);
    let b = uniform64(&mut rng, shape(1, 3, 3, 3), -1.0, 1.0);
    let r = uniform64(&mut rng, shape(1, 3, 3, 5), -1.0, 1.0);
    let (ga, gb) = ops::concat_channels_backward(&r, 2).unwrap();
    check(&mut rng, &a, &ga, |t| dot(&ops::concat_channels(t, &b).unwrap(), &r))
        .max(check(&mut rng, &b, &gb, |t| dot(&ops::concat_channels(&a, t).unwrap(), &r)))
}

fn slice(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = uniform64(&mut rng, shape(1, 3, 3, 5), -1.0, 1.0);
    let r = uniform64(&mut rng, shape(1, 3, 3, 2), -1.0, 1.0);
    let g = ops::slice_channels_backward(x.shape(), 1, &r).unwrap();
    check(&mut rng, &x, &g, |t| dot(&ops::slice_channels(t, 1, 2).unwrap(), &r))
}

fn attention(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (c, cr) = (4, 2);
    let x = uniform64(&mut rng, shape(2, 3, 3, c), -1.0, 1.0);
    let rw = uniform64(&mut rng, shape(1, 1, c, cr), -1.0, 1.0);
    let rb = uniform64(&mut rng, shape(1, 1, 1, cr), 0.2, 0.6);
    let ew = uniform64(&mut rng, shape(1, 1, cr, c), -1.0, 1.0);
    let eb = uniform64(&mut rng, shape(1, 1, 1, c), -0.5, 0.5);
    let r = uniform64(&mut rng, x.shape(), -1.0, 1.0);
    let run = |x: &Tensor<f64>, rw: &Tensor<f64>, ew: &Tensor<f64>| {
        let red = ConvParams::same(rw, Some(&rb));
        let exp = ConvParams::same(ew, Some(&eb));
        dot(&ops::channel_attention(x, &red, &exp).unwrap(), &r)
    };
    let g = ops::channel_attention_backward(
        &x,
        &ConvParams::same(&rw, Some(&rb)),
        &ConvParams::same(&ew, Some(&eb)),
        &r,
    )
    .unwrap();
    check(&mut rng, &x, &g.input, |t| run(t, &rw, &ew))
        .max(check(&mut rng, &rw, &g.reduce.kernel, |t| run(&x, t, &ew)))
        .max(check(&mut rng, &ew, &g.expand.kernel, |t| run(&x, &rw, t)))
}

/// Residual add and concat wired through the graph executor.
fn graph_add(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut b = GraphBuilder::new(&mut rng, 3);
    let x = b.input();
    let a = b.conv("a", x, 3, 3, 1).unwrap();
    let a = b.sigmoid("a.act", a);
    let s = b.add("sum", a, x).unwrap();
    let c = b.concat("cat", s, x);
    let y = b.conv("head", c, 3, 1, 1).unwrap();
    b.output("out", y);
    let meta = GraphMeta {
        arch: "fd".into(),
        config_hash: 0,
        downsample: 1,
    };
    let g = b.finish(meta).unwrap().cast::<f64>();
    let x = uniform64(&mut rng, shape(1, 4, 4, 3), 0.0, 1.0);
    let r = uniform64(&mut rng, x.shape(), -1.0, 1.0);
    let grads = g.forward_backward(&x, &r).unwrap();
    check(&mut rng, &x, &grads.input, |t| dot(&g.forward(t).unwrap(), &r))
}

pub fn op_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("conv2d 3x3", conv3 as Case),
        ("conv2d stride 2", conv_strided),
        ("conv2d grouped", conv_grouped),
        ("conv2d depthwise", conv_depthwise),
        ("conv2d 1x3 valid", conv_rect_valid),
        ("conv2d 1x1", conv_1x1),
        ("conv_transposed k2", transposed2),
        ("conv_transposed k3", transposed3),
        ("separable_conv", separable),
        ("asym_conv", asym),
        ("relu", relu),
        ("prelu", prelu),
        ("sigmoid", sigmoid),
        ("maxpool2", maxpool),
        ("upsample_nearest2", upsample_nearest),
        ("upsample_bilinear2", upsample_bilinear),
        ("global_avg_pool", global_pool),
        ("concat", concat),
        ("slice", slice),
        ("channel_attention", attention),
        ("add (graph)", graph_add),
    ]
}

/// Prediction/target pair whose differences stay at least 0.02 from zero.
fn loss_pair(rng: &mut Rng, s: Shape) -> (Tensor<f64>, Tensor<f64>) {
    let t = uniform64(rng, s, 0.15, 0.85);
    let mut p = t.clone();
    for v in p.data_mut() {
        let off = rng.uniform(0.02, 0.1);
        *v += if rng.coin() { off } else { -off };
    }
    (p, t)
}

fn loss_case(seed: u64, spec: &LossSpec, s: Shape) -> f64 {
    let mut rng = Rng::new(seed);
    let (p, t) = loss_pair(&mut rng, s);
    let (_, g) = loss(spec, &p, &t).unwrap();
    check(&mut rng, &p, &g, |x| loss(spec, x, &t).unwrap().0)
}

fn small() -> Shape {
    shape(2, 4, 5, 3)
}

fn l1(seed: u64) -> f64 {
    loss_case(seed, &LossSpec::L1, small())
}
fn l2(seed: u64) -> f64 {
    loss_case(seed, &LossSpec::L2, small())
}
fn charbonnier(seed: u64) -> f64 {
    loss_case(seed, &LossSpec::Charbonnier { eps: 1e-3 }, small())
}
fn psnr_loss(seed: u64) -> f64 {
    loss_case(seed, &LossSpec::PsnrLoss { eps: 1e-8 }, small())
}
fn ms_ssim1(seed: u64) -> f64 {
    loss_case(seed, &LossSpec::MsSsim { scales: Some(1) }, shape(1, 13, 12, 2))
}
fn ms_ssim2(seed: u64) -> f64 {
    loss_case(seed, &LossSpec::MsSsim { scales: Some(2) }, shape(1, 24, 22, 1))
}
fn mix(seed: u64) -> f64 {
    let spec = LossSpec::Mix {
        terms: vec![
            MixTerm {
                weight: 0.16,
                loss: LossSpec::L1,
            },
            MixTerm {
                weight: 0.84,
                loss: LossSpec::MsSsim { scales: Some(2) },
            },
        ],
    };
    loss_case(seed, &spec, shape(1, 22, 24, 1))
}

pub fn loss_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("l1", l1 as Case),
        ("l2", l2),
        ("charbonnier", charbonnier),
        ("psnr_loss", psnr_loss),
        ("ms_ssim 1 scale", ms_ssim1),
        ("ms_ssim 2 scales", ms_ssim2),
        ("mix l1+ms_ssim", mix),
    ]
}

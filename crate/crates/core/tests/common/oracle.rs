//! Direct loop implementations straight from the definitions.

use denoise_core::ops::{self, ConvParams, Padding};
use denoise_core::{Rng, Tensor};

use super::{shape, to_f64, uniform32};

/// Output extent and leading pad. `same` follows `out = ceil(in / s)` with any
/// odd remainder of padding after the data.
pub fn axis(input: usize, k: usize, s: usize, same: bool) -> (usize, usize) {
    if same {
        let out = input.div_ceil(s);
        let total = ((out - 1) * s + k).saturating_sub(input);
        (out, total / 2)
    } else {
        ((input - k) / s + 1, 0)
    }
}

pub struct Dense {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Dense {
    fn new(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    fn at(&mut self, n: usize, y: usize, x: usize, c: usize) -> &mut f64 {
        let [_, h, w, cc] = self.dims;
        &mut self.data[((n * h + y) * w + x) * cc + c]
    }
}

fn g(t: &Tensor<f32>, n: usize, y: usize, x: usize, c: usize) -> f64 {
    t.get(n, y, x, c) as f64
}

/// Grouped 2-D convolution. Kernel dims `(kh, kw, c_in / groups, c_out)`.
pub fn conv(
    x: &Tensor<f32>,
    k: &Tensor<f32>,
    bias: Option<&Tensor<f32>>,
    stride: usize,
    groups: usize,
    same: bool,
) -> Dense {
    let [n, h, w, _] = x.shape().dims();
    let [kh, kw, cig, cout] = k.shape().dims();
    let cog = cout / groups;
    let (oh, pt) = axis(h, kh, stride, same);
    let (ow, pl) = axis(w, kw, stride, same);
    let mut out = Dense::new([n, oh, ow, cout]);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let grp = co / cog;
                    let mut acc = bias.map_or(0.0, |t| t.data()[co] as f64);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cig {
                                acc += g(x, b, iy as usize, ix as usize, grp * cig + ci)
                                    * g(k, ky, kx, ci, co);
                            }
                        }
                    }
                    *out.at(b, oy, ox, co) = acc;
                }
            }
        }
    }
    out
}

/// Stride-2 transposed convolution as a scatter. Kernel dims `(k, k, c_out, c_in)`:
/// each input pixel spreads `x * w` over a `k x k` footprint of the doubled grid.
pub fn conv_transposed(x: &Tensor<f32>, k: &Tensor<f32>, bias: Option<&Tensor<f32>>) -> Dense {
    let [n, h, w, cin] = x.shape().dims();
    let [kh, kw, cout, _] = k.shape().dims();
    let (uh, uw) = (2 * h, 2 * w);
    let (_, pt) = axis(uh, kh, 2, true);
    let (_, pl) = axis(uw, kw, 2, true);
    let mut out = Dense::new([n, uh, uw, cout]);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let oy = (2 * y + ky) as isize - pt as isize;
                        let ox = (2 * xx + kx) as isize - pl as isize;
                        if oy < 0 || ox < 0 || oy >= uh as isize || ox >= uw as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            for co in 0..cout {
                                *out.at(b, oy as usize, ox as usize, co) +=
                                    g(x, b, y, xx, ci) * g(k, ky, kx, co, ci);
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(bt) = bias {
        for (i, v) in out.data.iter_mut().enumerate() {
            *v += bt.data()[i % cout] as f64;
        }
    }
    out
}

pub fn maxpool2(x: &Tensor<f32>) -> Dense {
    let [n, h, w, c] = x.shape().dims();
    let mut out = Dense::new([n, h / 2, w / 2, c]);
    for b in 0..n {
        for y in 0..h / 2 {
            for xx in 0..w / 2 {
                for ch in 0..c {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(g(x, b, 2 * y + dy, 2 * xx + dx, ch));
                        }
                    }
                    *out.at(b, y, xx, ch) = m;
                }
            }
        }
    }
    out
}

/// Per-channel `k x k` same-padded filter, then a 1x1 channel mix.
/// Depthwise kernel dims `(k, k, 1, c)`, pointwise `(1, 1, c, c_out)`.
pub fn separable(
    x: &Tensor<f32>,
    dw: &Tensor<f32>,
    dw_b: &Tensor<f32>,
    pw: &Tensor<f32>,
    pw_b: &Tensor<f32>,
) -> Dense {
    let [n, h, w, c] = x.shape().dims();
    let [k, _, _, _] = dw.shape().dims();
    let cout = pw.shape().c;
    let p = (k - 1) / 2;
    let mut mid = Dense::new([n, h, w, c]);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for ch in 0..c {
                    let mut acc = dw_b.data()[ch] as f64;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as isize + ky as isize - p as isize;
                            let ix = xx as isize + kx as isize - p as isize;
                            if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                                acc += g(x, b, iy as usize, ix as usize, ch) * g(dw, ky, kx, 0, ch);
                            }
                        }
                    }
                    *mid.at(b, y, xx, ch) = acc;
                }
            }
        }
    }
    let mut out = Dense::new([n, h, w, cout]);
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for co in 0..cout {
                    let mut acc = pw_b.data()[co] as f64;
                    for ch in 0..c {
                        acc += mid.data[((b * h + y) * w + xx) * c + ch] * g(pw, 0, 0, ch, co);
                    }
                    *out.at(b, y, xx, co) = acc;
                }
            }
        }
    }
    out
}

fn pick<T: Copy>(rng: &mut Rng, xs: &[T]) -> T {
    xs[rng.index(xs.len())]
}

/// Max-abs difference between `conv2d` and the loop oracle on one random instance.
pub fn conv_instance(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let groups = pick(&mut rng, &[1, 1, 2, 3]);
    let cig = 1 + rng.index(3);
    let cout = groups * (1 + rng.index(3));
    let (kh, kw) = (pick(&mut rng, &[1, 2, 3, 5]), pick(&mut rng, &[1, 2, 3, 5]));
    let stride = 1 + rng.index(3);
    let same = rng.coin();
    let (h, w) = (kh.max(2) + rng.index(7), kw.max(2) + rng.index(7));
    let s = shape(1 + rng.index(2), h, w, cig * groups);
    let x = uniform32(&mut rng, s, -1.0, 1.0);
    let k = uniform32(&mut rng, shape(kh, kw, cig, cout), -1.0, 1.0);
    let b = uniform32(&mut rng, shape(1, 1, 1, cout), -1.0, 1.0);
    let p = ConvParams {
        padding: if same { Padding::Same } else { Padding::Valid },
        ..ConvParams::same(&k, Some(&b)).with_stride(stride).with_groups(groups)
    };
    let got = ops::conv2d(&x, &p).unwrap();
    let want = conv(&x, &k, Some(&b), stride, groups, same);
    assert_eq!(got.shape().dims(), want.dims, "seed {seed}");
    super::max_abs(&to_f64(&got), &want.data)
}

pub fn transposed_instance(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let k = pick(&mut rng, &[2, 3]);
    let (cin, cout) = (1 + rng.index(4), 1 + rng.index(4));
    let s = shape(1 + rng.index(2), 1 + rng.index(6), 1 + rng.index(6), cin);
    let x = uniform32(&mut rng, s, -1.0, 1.0);
    let w = uniform32(&mut rng, shape(k, k, cout, cin), -1.0, 1.0);
    let b = uniform32(&mut rng, shape(1, 1, 1, cout), -1.0, 1.0);
    let got = ops::conv2d_transposed(&x, &ConvParams::same(&w, Some(&b)).with_stride(2)).unwrap();
    let want = conv_transposed(&x, &w, Some(&b));
    assert_eq!(got.shape().dims(), want.dims, "seed {seed}");
    super::max_abs(&to_f64(&got), &want.data)
}

pub fn maxpool_instance(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let s = shape(1 + rng.index(2), 2 * (1 + rng.index(6)), 2 * (1 + rng.index(6)), 1 + rng.index(4));
    let x = uniform32(&mut rng, s, -1.0, 1.0);
    let got = ops::maxpool2(&x).unwrap();
    let want = maxpool2(&x);
    assert_eq!(got.shape().dims(), want.dims, "seed {seed}");
    super::max_abs(&to_f64(&got), &want.data)
}

pub fn separable_instance(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let k = pick(&mut rng, &[3, 5]);
    let (c, cout) = (1 + rng.index(4), 1 + rng.index(5));
    let s = shape(1 + rng.index(2), 2 + rng.index(7), 2 + rng.index(7), c);
    let x = uniform32(&mut rng, s, -1.0, 1.0);
    let dw = uniform32(&mut rng, shape(k, k, 1, c), -1.0, 1.0);
    let dwb = uniform32(&mut rng, shape(1, 1, 1, c), -1.0, 1.0);
    let pw = uniform32(&mut rng, shape(1, 1, c, cout), -1.0, 1.0);
    let pwb = uniform32(&mut rng, shape(1, 1, 1, cout), -1.0, 1.0);
    let got = ops::separable_conv(
        &x,
        &ConvParams::same(&dw, Some(&dwb)).with_groups(c),
        &ConvParams::same(&pw, Some(&pwb)),
    )
    .unwrap();
    let want = separable(&x, &dw, &dwb, &pw, &pwb);
    assert_eq!(got.shape().dims(), want.dims, "seed {seed}");
    super::max_abs(&to_f64(&got), &want.data)
}

pub type Instance = fn(u64) -> f64;

pub fn cases() -> Vec<(&'static str, Instance)> {
    vec![
        ("conv2d", conv_instance as Instance),
        ("conv_transposed", transposed_instance),
        ("maxpool2", maxpool_instance),
        ("separable_conv", separable_instance),
    ]
}

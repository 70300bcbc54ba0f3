//! Direct 2-D convolutions: ordinary, grouped/depthwise, transposed,
//! separable and asymmetric (3x3 + 1x3 + 3x1) variants.
//!
//! Kernels are stored as rank-4 tensors with dims `(kh, kw, c_in / groups, c_out)`,
//! i.e. in the tensor's `(n, h, w, c)` slots. Biases are `(1, 1, 1, c_out)`.
//! All sums are accumulated in `f64`; each output element is produced by exactly
//! one accumulation loop so results never depend on evaluation order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding, TensorFlow convention: `out = ceil(in / stride)`, any odd
    /// remainder of padding goes after the data.
    Same,
    Valid,
}

/// Borrowed convolution parameters.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a, T: Real> {
    pub kernel: &'a Tensor<T>,
    pub bias: Option<&'a Tensor<T>>,
    pub stride: (usize, usize),
    pub padding: Padding,
    pub groups: usize,
}

impl<'a, T: Real> ConvParams<'a, T> {
    /// Stride-1, same-padded, ungrouped convolution.
    pub fn same(kernel: &'a Tensor<T>, bias: Option<&'a Tensor<T>>) -> Self {
        Self {
            kernel,
            bias,
            stride: (1, 1),
            padding: Padding::Same,
            groups: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = (stride, stride);
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn kh(&self) -> usize {
        self.kernel.shape().n
    }

    pub fn kw(&self) -> usize {
        self.kernel.shape().h
    }

    pub fn c_in(&self) -> usize {
        self.kernel.shape().w * self.groups
    }

    pub fn c_out(&self) -> usize {
        self.kernel.shape().c
    }
}

/// Kernel shape helper: `(kh, kw, c_in_per_group, c_out)`.
pub fn kernel_shape(kh: usize, kw: usize, c_in_per_group: usize, c_out: usize) -> Result<Shape> {
    Shape::new(kh, kw, c_in_per_group, c_out)
}

pub fn bias_shape(c_out: usize) -> Result<Shape> {
    Shape::new(1, 1, 1, c_out)
}

/// Output length and leading pad along one axis.
pub(crate) fn axis_geometry(
    input: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < k {
                return Err(Error::InvalidParam(format!(
                    "valid convolution with kernel {k} on extent {input}"
                )));
            }
            Ok(((input - k) / stride + 1, 0))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    input: Shape,
    output: Shape,
    kh: usize,
    kw: usize,
    sy: usize,
    sx: usize,
    pad_t: usize,
    pad_l: usize,
    groups: usize,
    cin_g: usize,
    cout_g: usize,
}

impl Geometry {
    fn new<T: Real>(input: Shape, p: &ConvParams<'_, T>) -> Result<Self> {
        let ks = p.kernel.shape();
        let (kh, kw, cin_g, c_out) = (ks.n, ks.h, ks.w, ks.c);
        let (sy, sx) = p.stride;
        if sy == 0 || sx == 0 {
            return Err(Error::InvalidParam("stride must be at least 1".into()));
        }
        if p.groups == 0 || c_out % p.groups != 0 {
            return Err(Error::InvalidGroups {
                groups: p.groups,
                c_in: cin_g * p.groups.max(1),
                c_out,
            });
        }
        if input.c != cin_g * p.groups {
            if !input.c.is_multiple_of(p.groups) {
                return Err(Error::InvalidGroups {
                    groups: p.groups,
                    c_in: input.c,
                    c_out,
                });
            }
            return Err(Error::ChannelMismatch {
                context: "conv2d input",
                expected: cin_g * p.groups,
                got: input.c,
            });
        }
        if let Some(b) = p.bias {
            b.expect_shape(bias_shape(c_out)?, "conv2d bias")?;
        }
        let (oh, pad_t) = axis_geometry(input.h, kh, sy, p.padding)?;
        let (ow, pad_l) = axis_geometry(input.w, kw, sx, p.padding)?;
        Ok(Self {
            input,
            output: Shape::new(input.n, oh, ow, c_out)?,
            kh,
            kw,
            sy,
            sx,
            pad_t,
            pad_l,
            groups: p.groups,
            cin_g,
            cout_g: c_out / p.groups,
        })
    }

    #[inline(always)]
    fn src(&self, o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let i = (o * stride + k) as isize - pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }
}

fn to_f64_vec<T: Real>(t: &[T]) -> Vec<f64> {
    t.iter().map(|v| v.as_f64()).collect()
}

fn from_f64_vec<T: Real>(shape: Shape, acc: &[f64]) -> Tensor<T> {
    let mut out = Tensor::zeros_like_shape(shape);
    for (o, &a) in out.data_mut().iter_mut().zip(acc) {
        *o = T::from_f64(a);
    }
    out
}

/// Output shape of [`conv2d`] for a given input shape.
pub fn conv2d_output_shape<T: Real>(input: Shape, p: &ConvParams<'_, T>) -> Result<Shape> {
    Ok(Geometry::new(input, p)?.output)
}

/// Standard (cross-correlation) 2-D convolution with zero padding.
pub fn conv2d<T: Real>(x: &Tensor<T>, p: &ConvParams<'_, T>) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), p)?;
    let w = to_f64_vec(p.kernel.data());
    let xd = x.data();
    let (s_in, s_out) = (g.input, g.output);
    let mut out = Tensor::zeros_like_shape(s_out);
    let od = out.data_mut();
    let bias: Vec<f64> = match p.bias {
        Some(b) => to_f64_vec(b.data()),
        None => vec![0.0; s_out.c],
    };
    let mut acc = vec![0.0f64; s_out.c];
    for n in 0..s_out.n {
        for oy in 0..s_out.h {
            for ox in 0..s_out.w {
                acc.copy_from_slice(&bias);
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.sy, g.pad_t, s_in.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.sx, g.pad_l, s_in.w) else {
                            continue;
                        };
                        let x_off = s_in.offset(n, iy, ix, 0);
                        let tap = (ky * g.kw + kx) * g.cin_g;
                        for grp in 0..g.groups {
                            let acc_g = &mut acc[grp * g.cout_g..(grp + 1) * g.cout_g];
                            for ci in 0..g.cin_g {
                                let xv = xd[x_off + grp * g.cin_g + ci].as_f64();
                                let wb = (tap + ci) * s_out.c + grp * g.cout_g;
                                let wrow = &w[wb..wb + g.cout_g];
                                for (a, &wv) in acc_g.iter_mut().zip(wrow) {
                                    *a += xv * wv;
                                }
                            }
                        }
                    }
                }
                let o = s_out.offset(n, oy, ox, 0);
                for (dst, &a) in od[o..o + s_out.c].iter_mut().zip(&acc) {
                    *dst = T::from_f64(a);
                }
            }
        }
    }
    out.finite("conv2d")
}

/// Gradient of `conv2d` with respect to its input (the adjoint of the linear map).
fn conv_input_grad<T: Real>(grad_out: &Tensor<T>, g: &Geometry, kernel: &[T]) -> Tensor<T> {
    let w = to_f64_vec(kernel);
    let (s_in, s_out) = (g.input, g.output);
    let god = grad_out.data();
    let mut acc = vec![0.0f64; s_in.volume()];
    let mut go = vec![0.0f64; s_out.c];
    for n in 0..s_out.n {
        for oy in 0..s_out.h {
            for ox in 0..s_out.w {
                let o = s_out.offset(n, oy, ox, 0);
                for (d, s) in go.iter_mut().zip(&god[o..o + s_out.c]) {
                    *d = s.as_f64();
                }
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.sy, g.pad_t, s_in.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.sx, g.pad_l, s_in.w) else {
                            continue;
                        };
                        let x_off = s_in.offset(n, iy, ix, 0);
                        let tap = (ky * g.kw + kx) * g.cin_g;
                        for grp in 0..g.groups {
                            let go_g = &go[grp * g.cout_g..(grp + 1) * g.cout_g];
                            for ci in 0..g.cin_g {
                                let wb = (tap + ci) * s_out.c + grp * g.cout_g;
                                let s: f64 = w[wb..wb + g.cout_g]
                                    .iter()
                                    .zip(go_g)
                                    .map(|(a, b)| a * b)
                                    .sum();
                                acc[x_off + grp * g.cin_g + ci] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    from_f64_vec(s_in, &acc)
}

/// Gradient of `conv2d` with respect to its kernel.
fn conv_kernel_grad<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>, g: &Geometry) -> Vec<f64> {
    let (s_in, s_out) = (g.input, g.output);
    let (xd, god) = (x.data(), grad_out.data());
    let mut acc = vec![0.0f64; g.kh * g.kw * g.cin_g * s_out.c];
    let mut go = vec![0.0f64; s_out.c];
    for n in 0..s_out.n {
        for oy in 0..s_out.h {
            for ox in 0..s_out.w {
                let o = s_out.offset(n, oy, ox, 0);
                for (d, s) in go.iter_mut().zip(&god[o..o + s_out.c]) {
                    *d = s.as_f64();
                }
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.sy, g.pad_t, s_in.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.sx, g.pad_l, s_in.w) else {
                            continue;
                        };
                        let x_off = s_in.offset(n, iy, ix, 0);
                        let tap = (ky * g.kw + kx) * g.cin_g;
                        for grp in 0..g.groups {
                            let go_g = &go[grp * g.cout_g..(grp + 1) * g.cout_g];
                            for ci in 0..g.cin_g {
                                let xv = xd[x_off + grp * g.cin_g + ci].as_f64();
                                let wb = (tap + ci) * s_out.c + grp * g.cout_g;
                                for (a, &gv) in acc[wb..wb + g.cout_g].iter_mut().zip(go_g) {
                                    *a += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    acc
}

fn channel_sums<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    let c = t.shape().c;
    let mut acc = vec![0.0f64; c];
    for px in t.data().chunks_exact(c) {
        for (a, v) in acc.iter_mut().zip(px) {
            *a += v.as_f64();
        }
    }
    acc
}

/// Gradients of a convolution: `(grad_x, grad_kernel, grad_bias)`.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Real> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(x.shape(), p)?;
    grad_out.expect_shape(g.output, "conv2d_backward grad_out")?;
    let input = conv_input_grad(grad_out, &g, p.kernel.data());
    let kernel = from_f64_vec(p.kernel.shape(), &conv_kernel_grad(x, grad_out, &g));
    let bias = from_f64_vec(bias_shape(g.output.c)?, &channel_sums(grad_out));
    Ok(ConvGrads {
        input,
        kernel,
        bias,
    })
}

/// Geometry of the forward convolution a transposed convolution is the adjoint of.
fn transposed_geometry<T: Real>(x: Shape, p: &ConvParams<'_, T>) -> Result<Geometry> {
    let ks = p.kernel.shape();
    let k = ks.n;
    let s = p.stride.0;
    let supported = ks.n == ks.h && p.stride.0 == p.stride.1 && s == 2 && (k == 2 || k == 3);
    if !supported || p.padding != Padding::Same {
        return Err(Error::Unsupported(format!(
            "transposed convolution with kernel {}x{}, stride {:?}, padding {:?} (supported: k=2 or 3, stride 2, same)",
            ks.n, ks.h, p.stride, p.padding
        )));
    }
    if p.groups != 1 {
        return Err(Error::Unsupported("grouped transposed convolution".into()));
    }
    // Transposed kernels are (kh, kw, c_out, c_in): the forward conv maps c_out -> c_in.
    if x.c != ks.c {
        return Err(Error::ChannelMismatch {
            context: "conv2d_transposed input",
            expected: ks.c,
            got: x.c,
        });
    }
    if let Some(b) = p.bias {
        b.expect_shape(bias_shape(ks.w)?, "conv2d_transposed bias")?;
    }
    let up = Shape::new(x.n, x.h * s, x.w * s, ks.w)?;
    let fwd = ConvParams { bias: None, ..*p };
    let g = Geometry::new(up, &fwd)?;
    debug_assert_eq!(g.output.dims(), x.dims());
    Ok(g)
}

/// Output shape of [`conv2d_transposed`].
pub fn conv2d_transposed_output_shape<T: Real>(x: Shape, p: &ConvParams<'_, T>) -> Result<Shape> {
    Ok(transposed_geometry(x, p)?.input)
}

/// Stride-2 transposed convolution, `out = in * 2` spatially.
///
/// The kernel has dims `(k, k, c_out, c_in)` and the operation is the exact
/// adjoint of `conv2d` with the same kernel, stride and same padding applied
/// to an input of the upsampled size.
pub fn conv2d_transposed<T: Real>(x: &Tensor<T>, p: &ConvParams<'_, T>) -> Result<Tensor<T>> {
    let g = transposed_geometry(x.shape(), p)?;
    let mut out = conv_input_grad(x, &g, p.kernel.data());
    if let Some(b) = p.bias {
        let c = g.input.c;
        let bd = b.data();
        for px in out.data_mut().chunks_exact_mut(c) {
            for (v, &bv) in px.iter_mut().zip(bd) {
                *v = *v + bv;
            }
        }
    }
    out.finite("conv2d_transposed")
}

pub fn conv2d_transposed_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = transposed_geometry(x.shape(), p)?;
    grad_out.expect_shape(g.input, "conv2d_transposed_backward grad_out")?;
    let fwd = ConvParams { bias: None, ..*p };
    let input = conv2d(grad_out, &fwd)?;
    // y = A^T x with A the forward conv; dL/dw pairs grad_out (A's input) with x (A's output).
    let kernel = from_f64_vec(p.kernel.shape(), &conv_kernel_grad(grad_out, x, &g));
    let bias = from_f64_vec(bias_shape(g.input.c)?, &channel_sums(grad_out));
    Ok(ConvGrads {
        input,
        kernel,
        bias,
    })
}

/// Depthwise convolution followed by a 1x1 pointwise convolution.
pub fn separable_conv<T: Real>(
    x: &Tensor<T>,
    depthwise: &ConvParams<'_, T>,
    pointwise: &ConvParams<'_, T>,
) -> Result<Tensor<T>> {
    validate_separable(x.shape(), depthwise, pointwise)?;
    conv2d(&conv2d(x, depthwise)?, pointwise)
}

pub(crate) fn validate_separable<T: Real>(
    x: Shape,
    depthwise: &ConvParams<'_, T>,
    pointwise: &ConvParams<'_, T>,
) -> Result<()> {
    if depthwise.groups != x.c || depthwise.kernel.shape().w != 1 {
        return Err(Error::InvalidParam(format!(
            "separable depthwise stage must have groups == c_in ({}), got groups={}",
            x.c, depthwise.groups
        )));
    }
    if pointwise.kh() != 1 || pointwise.kw() != 1 || pointwise.groups != 1 {
        return Err(Error::InvalidParam(
            "separable pointwise stage must be an ungrouped 1x1 convolution".into(),
        ));
    }
    Ok(())
}

/// Training-time asymmetric convolution block: parallel 3x3, 1x3 and 3x1
/// branches (stride 1, same padding) whose outputs are summed.
#[derive(Debug, Clone, Copy)]
pub struct AsymParams<'a, T: Real> {
    pub w3: &'a Tensor<T>,
    pub b3: &'a Tensor<T>,
    pub w13: &'a Tensor<T>,
    pub b13: &'a Tensor<T>,
    pub w31: &'a Tensor<T>,
    pub b31: &'a Tensor<T>,
}

impl<'a, T: Real> AsymParams<'a, T> {
    fn branches(&self) -> Result<[ConvParams<'a, T>; 3]> {
        let (s3, s13, s31) = (self.w3.shape(), self.w13.shape(), self.w31.shape());
        let ok = s3.n == 3
            && s3.h == 3
            && s13.n == 1
            && s13.h == 3
            && s31.n == 3
            && s31.h == 1
            && s13.w == s3.w
            && s31.w == s3.w
            && s13.c == s3.c
            && s31.c == s3.c;
        if !ok {
            return Err(Error::InvalidParam(format!(
                "asymmetric conv kernels must be 3x3, 1x3, 3x1 with equal channels; got {s3}, {s13}, {s31}"
            )));
        }
        Ok([
            ConvParams::same(self.w3, Some(self.b3)),
            ConvParams::same(self.w13, Some(self.b13)),
            ConvParams::same(self.w31, Some(self.b31)),
        ])
    }

    /// Collapse the three branches into one 3x3 kernel and bias.
    pub fn fuse(&self) -> Result<(Tensor<T>, Tensor<T>)> {
        self.branches()?;
        let mut kernel = self.w3.clone();
        let ks = kernel.shape();
        let (cin, cout) = (ks.w, ks.c);
        for t in 0..3 {
            for ci in 0..cin {
                for co in 0..cout {
                    // 1x3 lands on the middle row, 3x1 on the middle column.
                    let row = kernel.get(1, t, ci, co) + self.w13.get(0, t, ci, co);
                    kernel.set(1, t, ci, co, row);
                    let col = kernel.get(t, 1, ci, co) + self.w31.get(t, 0, ci, co);
                    kernel.set(t, 1, ci, co, col);
                }
            }
        }
        let bias = self.b3.add(self.b13)?.add(self.b31)?;
        Ok((kernel, bias))
    }
}

pub fn asym_conv_forward<T: Real>(x: &Tensor<T>, p: &AsymParams<'_, T>) -> Result<Tensor<T>> {
    let [a, b, c] = p.branches()?;
    let mut out = conv2d(x, &a)?;
    out.add_assign(&conv2d(x, &b)?)?;
    out.add_assign(&conv2d(x, &c)?)?;
    out.finite("asym_conv")
}

/// Gradients of the three branches, in `(3x3, 1x3, 3x1)` order.
pub fn asym_conv_backward<T: Real>(
    x: &Tensor<T>,
    p: &AsymParams<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, [ConvGrads<T>; 3])> {
    let [a, b, c] = p.branches()?;
    let ga = conv2d_backward(x, &a, grad_out)?;
    let gb = conv2d_backward(x, &b, grad_out)?;
    let gc = conv2d_backward(x, &c, grad_out)?;
    let mut gx = ga.input.clone();
    gx.add_assign(&gb.input)?;
    gx.add_assign(&gc.input)?;
    Ok((gx, [ga, gb, gc]))
}

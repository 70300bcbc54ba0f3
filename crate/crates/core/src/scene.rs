//! Procedural test scenes: smooth gradients, soft-edged blobs and faint texture.

use alloc::vec::Vec;

use crate::error::Result;
use crate::math;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

const BLOBS: usize = 6;
const EDGE_PX: f64 = 3.0;

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    color: [f64; 3],
}

fn smoothstep(e0: f64, e1: f64, v: f64) -> f64 {
    let t = ((v - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn color(rng: &mut Rng) -> [f64; 3] {
    [0; 3].map(|_| rng.uniform(0.1, 0.9))
}

/// An `(1, h, w, 3)` image with values in `[0.05, 0.95]`.
pub fn synthetic_scene(rng: &mut Rng, h: usize, w: usize) -> Result<Tensor<f32>> {
    let c0 = color(rng);
    let c1 = color(rng);
    let angle = rng.uniform(0.0, core::f64::consts::TAU);
    let (dy, dx) = (math::sin(angle), math::cos(angle));
    let blobs: Vec<Blob> = (0..BLOBS)
        .map(|_| Blob {
            cy: rng.uniform(0.0, h as f64),
            cx: rng.uniform(0.0, w as f64),
            ry: rng.uniform(0.1, 0.35) * h as f64,
            rx: rng.uniform(0.1, 0.35) * w as f64,
            color: color(rng),
        })
        .collect();
    let freq = rng.uniform(0.05, 0.2);
    let phase = rng.uniform(0.0, core::f64::consts::TAU);
    let diag = math::sqrt((h * h + w * w) as f64);

    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f64, x as f64);
            let t = ((fy * dy + fx * dx) / diag + 1.0) * 0.5;
            let mut px = [0, 1, 2].map(|c| c0[c] + (c1[c] - c0[c]) * t);
            for b in &blobs {
                let (ny, nx) = ((fy - b.cy) / b.ry, (fx - b.cx) / b.rx);
                let r = math::sqrt(ny * ny + nx * nx);
                let edge = EDGE_PX / b.ry.min(b.rx);
                let alpha = 1.0 - smoothstep(1.0 - edge, 1.0 + edge, r);
                for c in 0..3 {
                    px[c] += alpha * (b.color[c] - px[c]);
                }
            }
            let tex = 0.02 * math::sin(freq * fx + phase) * math::cos(freq * 0.7 * fy);
            data.extend(px.map(|v| (v + tex).clamp(0.05, 0.95) as f32));
        }
    }
    Tensor::from_vec(Shape::new(1, h, w, 3)?, data)
}

//! PNG (8/16-bit) and PPM (P3/P6) images as `(1, H, W, 3)` tensors in [0, 1].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use denoise_core::{Shape, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Depth {
    #[default]
    Eight,
    Sixteen,
}

impl Depth {
    fn max(self) -> f32 {
        match self {
            Depth::Eight => 255.0,
            Depth::Sixteen => 65535.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Png,
    Ppm,
}

fn kind(path: &Path) -> Result<Kind> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(Kind::Png),
        Some("ppm" | "pnm") => Ok(Kind::Ppm),
        _ => Err(Error::format(path, "unknown image extension (expected .png or .ppm)")),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(Error::io(path))?;
    match kind(path)? {
        Kind::Png => decode_png(&bytes).map_err(|m| Error::format(path, m)),
        Kind::Ppm => decode_ppm(&bytes).map_err(|m| Error::format(path, m)),
    }
}

/// Writes `img` (shape `(1, H, W, 3)`), clamping to [0, 1] and rounding to
/// the nearest code value.
pub fn write_image(path: impl AsRef<Path>, img: &Tensor<f32>, depth: Depth) -> Result<()> {
    let path = path.as_ref();
    let s = img.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Config(format!(
            "can only write single RGB images, got shape {s}"
        )));
    }
    let bytes = match kind(path)? {
        Kind::Png => encode_png(img, depth).map_err(|m| Error::format(path, m))?,
        Kind::Ppm => encode_ppm(img, depth),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut f = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(Error::io(path))
}

fn quantize(v: f32, depth: Depth) -> u16 {
    (v.clamp(0.0, 1.0) * depth.max()).round() as u16
}

fn samples(img: &Tensor<f32>, depth: Depth) -> Vec<u8> {
    match depth {
        Depth::Eight => img.data().iter().map(|&v| quantize(v, depth) as u8).collect(),
        Depth::Sixteen => img
            .data()
            .iter()
            .flat_map(|&v| quantize(v, depth).to_be_bytes())
            .collect(),
    }
}

/// Builds an RGB tensor from interleaved samples with `channels` per pixel.
/// Gray is replicated; alpha is dropped.
fn to_tensor(h: usize, w: usize, channels: usize, values: &[f32]) -> Result<Tensor<f32>, String> {
    let shape = Shape::new(1, h, w, 3).map_err(|e| e.to_string())?;
    if values.len() != h * w * channels {
        return Err(format!(
            "expected {} samples, found {}",
            h * w * channels,
            values.len()
        ));
    }
    let data = values
        .chunks_exact(channels)
        .flat_map(|px| match channels {
            1 | 2 => [px[0]; 3],
            _ => [px[0], px[1], px[2]],
        })
        .collect();
    Tensor::from_vec(shape, data).map_err(|e| e.to_string())
}

fn decode_png(bytes: &[u8]) -> Result<Tensor<f32>, String> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let buf = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    let values: Vec<f32> = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf.iter().map(|&b| b as f32 / 255.0).collect(),
        d => return Err(format!("unsupported bit depth {d:?} after expansion")),
    };
    to_tensor(info.height as usize, info.width as usize, channels, &values)
}

fn encode_png(img: &Tensor<f32>, depth: Depth) -> Result<Vec<u8>, String> {
    let s = img.shape();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, s.w as u32, s.h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(match depth {
            Depth::Eight => png::BitDepth::Eight,
            Depth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = enc.write_header().map_err(|e| e.to_string())?;
        writer
            .write_image_data(&samples(img, depth))
            .map_err(|e| e.to_string())?;
    }
    Ok(out)
}

/// Splits the PPM header into its four fields, skipping `#` comments.
/// Returns the fields and the offset of the first raster byte.
fn ppm_header(bytes: &[u8]) -> Result<([String; 4], usize), String> {
    let mut fields: Vec<String> = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        match bytes.get(i) {
            None => return Err("truncated header".into()),
            Some(b'#') => {
                while bytes.get(i).is_some_and(|&b| b != b'\n') {
                    i += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => i += 1,
            Some(_) => {
                let start = i;
                while bytes.get(i).is_some_and(|b| !b.is_ascii_whitespace()) {
                    i += 1;
                }
                fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
            }
        }
    }
    // Exactly one whitespace byte separates the header from binary data.
    let fields: [String; 4] = fields.try_into().expect("four fields");
    Ok((fields, i + 1))
}

fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>, String> {
    let ([magic, w, h, max], start) = ppm_header(bytes)?;
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("bad {what} '{s}'"))
    };
    let (w, h, max) = (num(&w, "width")?, num(&h, "height")?, num(&max, "maxval")?);
    if max == 0 || max > 65535 {
        return Err(format!("maxval {max} outside 1..=65535"));
    }
    let scale = max as f32;
    let count = w * h * 3;
    let values: Vec<f32> = match magic.as_str() {
        "P6" => {
            let raster = bytes.get(start..).unwrap_or_default();
            if max < 256 {
                raster.iter().take(count).map(|&b| b as f32 / scale).collect()
            } else {
                raster
                    .chunks_exact(2)
                    .take(count)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / scale)
                    .collect()
            }
        }
        "P3" => String::from_utf8_lossy(bytes.get(start.min(bytes.len())..).unwrap_or_default())
            .split_ascii_whitespace()
            .take(count)
            .map(|t| t.parse::<u32>().map(|v| v as f32 / scale))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad sample: {e}"))?,
        m => return Err(format!("unsupported PPM magic '{m}' (expected P3 or P6)")),
    };
    if values.iter().any(|&v| v > 1.0) {
        return Err(format!("sample exceeds maxval {max}"));
    }
    to_tensor(h, w, 3, &values)
}

fn encode_ppm(img: &Tensor<f32>, depth: Depth) -> Vec<u8> {
    let s = img.shape();
    let mut out = format!("P6\n{} {}\n{}\n", s.w, s.h, depth.max() as u32).into_bytes();
    out.extend(samples(img, depth));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use denoise_core::Rng;

    fn sample_image(h: usize, w: usize) -> Tensor<f32> {
        Tensor::uniform(&mut Rng::new(4), (1, h, w, 3), 0.0, 1.0).unwrap()
    }

    fn round_trip(name: &str, depth: Depth) -> f64 {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        let img = sample_image(5, 7);
        write_image(&path, &img, depth).unwrap();
        read_image(&path).unwrap().max_abs_diff(&img).unwrap()
    }

    #[test]
    fn quantization_error_is_half_a_code() {
        for name in ["a.png", "a.ppm"] {
            assert!(round_trip(name, Depth::Eight) <= 0.5 / 255.0 + 1e-7);
            assert!(round_trip(name, Depth::Sixteen) <= 0.5 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn ascii_ppm_with_comments() {
        let text = b"P3\n# two pixels\n2 1\n# max\n255\n255 0 0  0 0 51\n";
        let t = decode_ppm(text).unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.2]);
    }

    #[test]
    fn truncated_raster_is_rejected() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([0u8; 5]);
        assert!(decode_ppm(&bytes).is_err());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(write_image("x.bmp", &sample_image(2, 2), Depth::Eight).is_err());
    }
}

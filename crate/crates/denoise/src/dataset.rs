//! On-disk pair datasets: `scene_XXXX/{noisy,clean}.png`, plus an optional
//! `params.json` recording how a synthesized scene was made.

use std::fs;
use std::path::{Path, PathBuf};

use denoise_core::isp::{synth_pair, IspParams, NoiseParams};
use denoise_core::train::{Dataset, Pair};
use denoise_core::{Rng, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{read_image, write_image, Depth};
use crate::model::{read_json, write_json};

pub const SCENE_PREFIX: &str = "scene_";
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pnm"];

/// Everything needed to regenerate one synthesized pair bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub source: PathBuf,
    pub seed: u64,
    /// Index of the scene; its noise stream is `Rng::derive(seed, index)`.
    pub index: u64,
    pub isp: IspParams,
    pub noise: NoiseParams,
}

impl SynthRecord {
    pub fn regenerate(&self) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let img = read_image(&self.source)?;
        let mut rng = Rng::derive(self.seed, self.index);
        Ok(synth_pair(&img, &self.isp, &self.noise, &mut rng)?)
    }
}

/// How the noise coefficients of each scene are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Fixed(NoiseParams),
    /// Log-uniform per scene between the two corners.
    Range(NoiseParams, NoiseParams),
}

impl std::str::FromStr for NoiseSpec {
    type Err = String;

    /// `a,b` for fixed coefficients or `a_lo:a_hi,b_lo:b_hi` for a range.
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected 'a,b' or 'alo:ahi,blo:bhi', got '{s}'"))?;
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number '{t}'"))
        };
        let bounds = |t: &str| match t.split_once(':') {
            Some((lo, hi)) => Ok((num(lo)?, num(hi)?)),
            None => num(t).map(|v| (v, v)),
        };
        let ((alo, ahi), (blo, bhi)) = (bounds(a)?, bounds(b)?);
        let make = |a, b| NoiseParams::new(a, b).map_err(|e| e.to_string());
        if alo > ahi || blo > bhi {
            return Err(format!("empty noise range in '{s}'"));
        }
        if (alo, blo) == (ahi, bhi) {
            Ok(NoiseSpec::Fixed(make(alo, blo)?))
        } else {
            Ok(NoiseSpec::Range(make(alo, blo)?, make(ahi, bhi)?))
        }
    }
}

impl NoiseSpec {
    pub fn draw(&self, rng: &mut Rng) -> Result<NoiseParams> {
        match *self {
            NoiseSpec::Fixed(p) => Ok(p),
            NoiseSpec::Range(lo, hi) => Ok(NoiseParams::sample(rng, lo, hi)?),
        }
    }
}

pub fn scene_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("{SCENE_PREFIX}{index:04}"))
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    out.sort();
    Ok(out)
}

/// Scene directories under `root`, sorted by name.
pub fn list_scenes(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(root)
        .map_err(Error::io(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(SCENE_PREFIX))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// `stem.png`, falling back to `stem.ppm`.
fn find_image(dir: &Path, stem: &str) -> Result<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|e| dir.join(format!("{stem}.{e}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::format(dir, format!("missing {stem}.png")))
}

pub fn read_pair(scene: &Path) -> Result<Pair<f32>> {
    let noisy = read_image(find_image(scene, "noisy")?)?;
    let clean = read_image(find_image(scene, "clean")?)?;
    if noisy.shape() != clean.shape() {
        return Err(Error::format(
            scene,
            format!("noisy {} and clean {} differ in size", noisy.shape(), clean.shape()),
        ));
    }
    Ok(Pair { noisy, clean })
}

/// Loads every scene; the last `val_count` become the validation split.
pub fn load_dataset(root: &Path, val_count: usize) -> Result<Dataset> {
    let scenes = list_scenes(root)?;
    if scenes.len() <= val_count {
        return Err(Error::Config(format!(
            "{} holds {} scene(s); need more than the {val_count} held out for validation",
            root.display(),
            scenes.len()
        )));
    }
    let mut pairs = scenes.iter().map(|s| read_pair(s)).collect::<Result<Vec<_>>>()?;
    let val = pairs.split_off(pairs.len() - val_count);
    Ok(Dataset { train: pairs, val })
}

pub fn write_pair(
    scene: &Path,
    pair: &Pair<f32>,
    record: Option<&SynthRecord>,
    depth: Depth,
) -> Result<()> {
    write_image(scene.join("noisy.png"), &pair.noisy, depth)?;
    write_image(scene.join("clean.png"), &pair.clean, depth)?;
    if let Some(r) = record {
        write_json(scene.join("params.json"), r)?;
    }
    Ok(())
}

pub fn read_record(scene: &Path) -> Result<SynthRecord> {
    read_json(scene.join("params.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_spec_forms() {
        let fixed: NoiseSpec = "0.01,1e-4".parse().unwrap();
        assert_eq!(fixed, NoiseSpec::Fixed(NoiseParams::new(0.01, 1e-4).unwrap()));
        let range: NoiseSpec = "1e-4:1e-2, 1e-6:1e-4".parse().unwrap();
        assert!(matches!(range, NoiseSpec::Range(lo, hi) if lo.a == 1e-4 && hi.b == 1e-4));
        assert!("-0.1,0".parse::<NoiseSpec>().is_err());
        assert!("0.1".parse::<NoiseSpec>().is_err());
        assert!("0.2:0.1,0".parse::<NoiseSpec>().is_err());
    }

    #[test]
    fn range_draws_stay_inside() {
        let spec: NoiseSpec = "1e-4:1e-2,1e-6:1e-4".parse().unwrap();
        let mut rng = Rng::new(0);
        for _ in 0..100 {
            let p = spec.draw(&mut rng).unwrap();
            assert!((1e-4..=1e-2).contains(&p.a) && (1e-6..=1e-4).contains(&p.b));
        }
    }

    #[test]
    fn dataset_round_trip_and_split() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(1);
        for i in 0..3 {
            let clean: Tensor<f32> = Tensor::uniform(&mut rng, (1, 8, 8, 3), 0.0, 1.0).unwrap();
            let pair = Pair {
                noisy: clean.clone(),
                clean,
            };
            write_pair(&scene_dir(dir.path(), i), &pair, None, Depth::Sixteen).unwrap();
        }
        let d = load_dataset(dir.path(), 1).unwrap();
        assert_eq!((d.train.len(), d.val.len()), (2, 1));
        assert!(load_dataset(dir.path(), 3).is_err());
    }
}

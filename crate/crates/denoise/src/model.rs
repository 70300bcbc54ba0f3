//! Model files: a MAID weight file plus a JSON architecture sidecar.
//!
//! `net.maid` is described by `net.arch.json` unless a config path is given.

use std::fs;
use std::path::{Path, PathBuf};

use denoise_core::graph::{weights, ModelGraph};
use denoise_core::zoo::{self, ArchConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ArchConfig,
    pub graph: ModelGraph<f32>,
}

pub fn sidecar(weights: &Path) -> PathBuf {
    weights.with_extension("arch.json")
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("config types serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Writes a file, creating parent directories first.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_arch(path: impl AsRef<Path>) -> Result<ArchConfig> {
    let arch: ArchConfig = read_json(path.as_ref())?;
    arch.validate()?;
    Ok(arch)
}

/// Loads weights into a freshly built graph of the given architecture.
pub fn load(weights_path: impl AsRef<Path>, arch_path: Option<&Path>) -> Result<Model> {
    let weights_path = weights_path.as_ref();
    let arch_path = arch_path.map_or_else(|| sidecar(weights_path), Path::to_path_buf);
    let bytes = fs::read(weights_path).map_err(Error::io(weights_path))?;
    let arch = read_arch(&arch_path)?;
    let store = weights::decode(&bytes).map_err(|e| Error::format(weights_path, e.to_string()))?;
    let mut graph = zoo::build(&arch, 0)?;
    graph
        .load_params(store)
        .map_err(|e| Error::format(weights_path, format!("does not match {}: {e}", arch_path.display())))?;
    Ok(Model { arch, graph })
}

/// Writes the weight file and its architecture sidecar.
pub fn save(weights_path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let weights_path = weights_path.as_ref();
    write_bytes(weights_path, &weights::encode(model.graph.params()))?;
    write_json(sidecar(weights_path), &model.arch)
}

/// Stable identifier of a weight set: FNV-1a over its MAID encoding.
pub fn weights_digest(g: &ModelGraph<f32>) -> String {
    let h = weights::encode(g.params())
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        });
    format!("{h:016x}")
}

//! `params.json` (names and shapes) plus `params.f32` (little-endian payload in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Parameter, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    params: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint<'a>(dir: &Path, params: impl IntoIterator<Item = &'a Parameter>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest { params: Vec::new() };
    let mut payload = Vec::new();
    for p in params {
        manifest.params.push(Entry {
            name: p.name().to_string(),
            shape: p.value().shape().to_vec(),
        });
        for &v in p.value().data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join("params.json");
    fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join("params.f32");
    fs::write(&ppath, payload).map_err(|e| Error::io(&ppath, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let mpath = dir.join("params.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse("params.json", e.to_string()))?;
    let ppath = dir.join("params.f32");
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let expected: usize = manifest
        .params
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if bytes.len() != expected * 4 {
        return Err(Error::parse(
            "params.f32",
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    manifest
        .params
        .into_iter()
        .map(|e| {
            let len = e.shape.iter().product();
            let data: Vec<f64> = floats.by_ref().take(len).collect();
            Ok((e.name, Tensor::new(&e.shape, data)?))
        })
        .collect()
}

/// Copies loaded values into parameters with matching names and shapes.
pub fn restore(params: &mut [&mut Parameter], loaded: &[(String, Tensor)]) -> Result<()> {
    for p in params.iter_mut() {
        let (_, t) = loaded
            .iter()
            .find(|(n, _)| n == p.name())
            .ok_or_else(|| Error::parse("params.json", format!("missing parameter `{}`", p.name())))?;
        if t.shape() != p.value().shape() {
            return Err(Error::parse(
                "params.json",
                format!("shape of `{}` is {:?}, expected {:?}", p.name(), t.shape(), p.value().shape()),
            ));
        }
        *p.value_mut() = t.clone();
    }
    Ok(())
}

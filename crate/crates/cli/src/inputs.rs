//! Loading and saving of the files the subcommands exchange.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sis_core::io::{load_npy, load_pnm, write_atomic, write_npy, write_pnm, ImageBuffer};
use sis_core::pipeline::PipelineConfig;
use sis_core::spectral::InstanceSegmentation;
use sis_core::Tensor;

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn is_npy(path: &Path) -> bool {
    extension(path) == "npy"
}

/// `[h,w,3]` RGB in `[0,1]` from a PPM or an NPY array.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let t = if is_npy(path) {
        load_npy(path)?
    } else {
        load_pnm(path)?.to_tensor()
    };
    match t.shape() {
        [_, _, 3] => Ok(t),
        other => bail!("{}: image must be [h,w,3], got {other:?}", path.display()),
    }
}

/// `[h,w]` map in `[0,1]` from a PGM or an NPY array (`[h,w]` or `[h,w,1]`).
pub fn load_map(path: &Path) -> Result<Tensor> {
    let t = if is_npy(path) {
        load_npy(path)?
    } else {
        load_pnm(path)?.to_tensor()
    };
    let t = match *t.shape() {
        [h, w] | [h, w, 1] => t.reshape(vec![h, w])?,
        ref other => bail!("{}: map must be [h,w], got {other:?}", path.display()),
    };
    if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        bail!("{}: map values must lie in [0,1]", path.display());
    }
    Ok(t)
}

/// `[h,w,c]` feature map from an NPY array, or from a PNM scaled to 8-bit units.
pub fn load_features(path: &Path) -> Result<Tensor> {
    let t = if is_npy(path) {
        load_npy(path)?
    } else {
        load_pnm(path)?.to_tensor().map(|v| v * 255.0)
    };
    match *t.shape() {
        [_, _, _] => Ok(t),
        [h, w] => Ok(t.reshape(vec![h, w, 1])?),
        ref other => bail!("{}: features must be [h,w,c], got {other:?}", path.display()),
    }
}

/// Instance labels from a PGM (any maxval) or an integer-valued NPY array.
pub fn load_labels(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    if is_npy(path) {
        let t = load_npy(path)?;
        let [h, w] = *t.shape() else {
            bail!("{}: label map must be [h,w], got {:?}", path.display(), t.shape());
        };
        let labels = t
            .data()
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && (0.0..=u16::MAX as f64).contains(&v) {
                    Ok(v as u16)
                } else {
                    bail!("{}: label {v} is not a 16-bit integer", path.display())
                }
            })
            .collect::<Result<_>>()?;
        return Ok((h, w, labels));
    }
    let img = load_pnm(path)?;
    if img.channels() != 1 {
        bail!("{}: label map must be single-channel", path.display());
    }
    Ok((img.height(), img.width(), img.samples().to_vec()))
}

/// Parses an instance count: a positive integer or a subitizing class such
/// as `"4+"`, which stands for its lower bound.
pub fn parse_k(s: &str) -> Result<usize> {
    let digits = s.trim().trim_end_matches('+');
    let k: usize = digits
        .parse()
        .with_context(|| format!("instance count {s:?} is not a positive integer or N+"))?;
    if k == 0 {
        bail!("instance count must be at least 1");
    }
    Ok(k)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum KValue {
    Number(usize),
    Text(String),
}

#[derive(Debug, Deserialize)]
struct KSidecar {
    k: KValue,
}

/// Reads `{"k": 3}` or `{"k": "4+"}`.
pub fn load_k_sidecar(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sidecar: KSidecar =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    match sidecar.k {
        KValue::Number(0) => bail!("{}: k must be at least 1", path.display()),
        KValue::Number(k) => Ok(k),
        KValue::Text(s) => parse_k(&s),
    }
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: PipelineConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(config)
}

/// Fails unless `path` can be created: its directory exists and it is not a
/// directory itself.
pub fn check_writable(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    if path.is_dir() {
        bail!("output path {} is a directory", path.display());
    }
    Ok(())
}

/// `path` with its extension replaced by `json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub label: u16,
    pub confidence: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confidences {
    pub k: usize,
    pub instances: Vec<InstanceRecord>,
}

impl Confidences {
    pub fn from_segmentation(seg: &InstanceSegmentation, k: usize) -> Self {
        let instances = seg
            .confidences()
            .iter()
            .enumerate()
            .map(|(i, &confidence)| {
                let label = i as u16 + 1;
                InstanceRecord {
                    label,
                    confidence,
                    pixels: seg.labels().iter().filter(|&&l| l == label).count(),
                }
            })
            .collect();
        Self { k, instances }
    }
}

pub fn load_confidences(path: &Path) -> Result<Confidences> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Encoded bytes for a `[h,w]` map in `[0,1]`: NPY when the path ends in
/// `.npy`, 8-bit PGM otherwise.
pub fn encode_map(path: &Path, t: &Tensor) -> Result<Vec<u8>> {
    if is_npy(path) {
        Ok(write_npy(t))
    } else {
        Ok(write_pnm(&ImageBuffer::from_unit_tensor(t, 255)?))
    }
}

pub fn encode_labels(h: usize, w: usize, labels: &[u16]) -> Result<Vec<u8>> {
    Ok(write_pnm(&ImageBuffer::from_labels(h, w, labels)?))
}

pub fn encode_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every file atomically, after all of them have been encoded.
pub fn write_all(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    for (path, _) in files {
        check_writable(path)?;
    }
    for (path, bytes) in files {
        write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

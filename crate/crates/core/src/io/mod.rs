//! File formats: NPY for real-valued tensors, binary PNM for images and
//! label maps, plus small helpers for reading and atomically writing them.

mod npy;
mod pnm;

use std::fs;
use std::path::Path;

pub use npy::{read_npy, write_npy};
pub use pnm::{read_pnm, write_pnm, ImageBuffer};

use crate::error::Result;
use crate::tensor::Tensor;

pub fn load_npy(path: impl AsRef<Path>) -> Result<Tensor> {
    read_npy(&fs::read(path)?)
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    read_pnm(&fs::read(path)?)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

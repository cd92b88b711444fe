use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{arg_err, Error, Result};
use crate::io::load_npy;
use crate::linalg::Matrix;
use crate::tensor::Tensor;

use super::{DenseLayerParams, SeParams};

/// JSON object mapping parameter names to NPY files. Relative paths resolve
/// against the manifest's directory.
///
/// Naming scheme:
///
/// * SE block `<p>`: `<p>.w1` `[C/r, C]`, `<p>.b1`, `<p>.w2` `[C, C/r]`, `<p>.b2`
/// * dense layer `l` of block `<p>`: `<p>.<l>.bn_gamma`, `.bn_beta`,
///   `.bn_mean`, `.bn_var`, `.kernel` `[3, 3, C_in, growth]`, with `l`
///   counting from 0
#[derive(Debug, Clone)]
pub struct ParamManifest {
    root: PathBuf,
    entries: BTreeMap<String, PathBuf>,
}

impl ParamManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let entries: BTreeMap<String, PathBuf> = serde_json::from_slice(&fs::read(path)?)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn from_entries(root: impl Into<PathBuf>, entries: BTreeMap<String, PathBuf>) -> Self {
        Self {
            root: root.into(),
            entries,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let rel = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Argument(format!("manifest has no parameter '{name}'")))?;
        load_npy(self.root.join(rel))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let t = self.tensor(name)?;
        if t.ndim() != 1 {
            return arg_err(format!("'{name}' must be 1-D, got {:?}", t.shape()));
        }
        Ok(t.into_data())
    }

    fn matrix(&self, name: &str) -> Result<Matrix> {
        let t = self.tensor(name)?;
        let &[r, c] = t.shape() else {
            return arg_err(format!("'{name}' must be 2-D, got {:?}", t.shape()));
        };
        Matrix::from_vec(r, c, t.into_data())
    }

    pub fn se_params(&self, prefix: &str, reduction: usize) -> Result<SeParams> {
        SeParams::new(
            self.matrix(&format!("{prefix}.w1"))?,
            self.vector(&format!("{prefix}.b1"))?,
            self.matrix(&format!("{prefix}.w2"))?,
            self.vector(&format!("{prefix}.b2"))?,
            reduction,
        )
    }

    /// Loads layers `<prefix>.0`, `<prefix>.1`, ... until one is missing.
    pub fn dense_layers(&self, prefix: &str) -> Result<Vec<DenseLayerParams>> {
        let mut layers = Vec::new();
        while self.entries.contains_key(&format!("{prefix}.{}.kernel", layers.len())) {
            let l = format!("{prefix}.{}", layers.len());
            layers.push(DenseLayerParams::new(
                self.vector(&format!("{l}.bn_gamma"))?,
                self.vector(&format!("{l}.bn_beta"))?,
                self.vector(&format!("{l}.bn_mean"))?,
                self.vector(&format!("{l}.bn_var"))?,
                self.tensor(&format!("{l}.kernel"))?,
            )?);
        }
        Ok(layers)
    }
}

//! End-to-end salient instance segmentation of one image.

use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::crf::{refine_saliency, CrfParams, DEFAULT_MAX_SIDE};
use crate::error::{arg_err, Result};
use crate::slic::{
    mask_by_saliency, rgb_to_lab, slic_segment, DEFAULT_COMPACTNESS, DEFAULT_ITERATIONS, DEFAULT_SUPERPIXELS,
};
use crate::spectral::{
    cluster_instances_at, InstanceSegmentation, SpectralParams, DEFAULT_LAMBDA, DEFAULT_SIGMA2, SALIENCY_THRESHOLD,
};
use crate::tensor::{resize_bilinear, Tensor};

/// Every tunable of the pipeline. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_superpixels: usize,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub crf: CrfParams,
    /// Run dense-CRF refinement on the saliency map before clustering.
    pub refine_crf: bool,
    /// Longest side of the grid the CRF runs on.
    pub crf_max_side: usize,
    pub saliency_threshold: f64,
    /// Replaces the instance count supplied with the inputs.
    pub k_override: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_superpixels: DEFAULT_SUPERPIXELS,
            compactness: DEFAULT_COMPACTNESS,
            slic_iterations: DEFAULT_ITERATIONS,
            lambda: DEFAULT_LAMBDA,
            sigma2: DEFAULT_SIGMA2,
            crf: CrfParams::default(),
            refine_crf: false,
            crf_max_side: DEFAULT_MAX_SIDE,
            saliency_threshold: SALIENCY_THRESHOLD,
            k_override: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_superpixels == 0 {
            return arg_err("n_superpixels must be positive");
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return arg_err(format!("compactness must be positive, got {}", self.compactness));
        }
        if self.slic_iterations == 0 {
            return arg_err("slic_iterations must be positive");
        }
        if !(0.0..=1.0).contains(&self.saliency_threshold) {
            return arg_err(format!(
                "saliency_threshold must lie in [0,1], got {}",
                self.saliency_threshold
            ));
        }
        if self.crf_max_side == 0 {
            return arg_err("crf_max_side must be positive");
        }
        if self.k_override == Some(0) {
            return arg_err("k_override must be at least 1");
        }
        self.spectral(1).validate()?;
        self.crf.validate()
    }

    pub fn spectral(&self, k: usize) -> SpectralParams {
        SpectralParams {
            lambda: self.lambda,
            sigma2: self.sigma2,
            k,
        }
    }

    /// The instance count actually used: the override if set, else `k`.
    pub fn effective_k(&self, k: usize) -> usize {
        self.k_override.unwrap_or(k)
    }
}

/// Brings a `[h,w]` or `[h,w,c]` map onto an `h x w` grid.
pub fn reconcile(t: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (th, tw, _) = t.hwc()?;
    if (th, tw) == (h, w) {
        return Ok(t.clone());
    }
    debug!("resizing {:?} to {h}x{w}", t.shape());
    resize_bilinear(t, h, w)
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    info!("stage={stage} ms={:.3}", start.elapsed().as_secs_f64() * 1e3);
    Ok(out)
}

/// Segments the salient region of `image` (`[h,w,3]`, values in `[0,1]`)
/// into `k` instances. `saliency` (`[h,w]` in `[0,1]`) and `features`
/// (`[h,w,c]`) may come at other resolutions and are resized to the image.
pub fn run_pipeline(
    image: &Tensor,
    saliency: &Tensor,
    features: &Tensor,
    k: usize,
    config: &PipelineConfig,
) -> Result<InstanceSegmentation> {
    config.validate()?;
    let (h, w, c) = image.hwc()?;
    if image.ndim() != 3 || c != 3 {
        return arg_err(format!("image must be [h,w,3], got {:?}", image.shape()));
    }
    if saliency.ndim() != 2 {
        return arg_err(format!("saliency must be [h,w], got {:?}", saliency.shape()));
    }
    if features.ndim() != 3 {
        return arg_err(format!("features must be [h,w,c], got {:?}", features.shape()));
    }
    let k = config.effective_k(k);
    if k == 0 {
        return arg_err("instance count must be at least 1");
    }
    let start = Instant::now();

    let (saliency, features) = timed("reconcile", || {
        Ok((reconcile(saliency, h, w)?, reconcile(features, h, w)?))
    })?;
    let saliency = if config.refine_crf {
        timed("crf", || refine_saliency(&saliency, image, &config.crf, config.crf_max_side))?
    } else {
        saliency
    };
    let lab = timed("lab", || rgb_to_lab(&mask_by_saliency(image, &saliency, config.saliency_threshold)?))?;
    let n_superpixels = config.n_superpixels.min(h * w);
    let part = timed("slic", || {
        slic_segment(&lab, n_superpixels, config.compactness, config.slic_iterations)
    })?;
    debug!("{} superpixels", part.n_superpixels());
    let seg = timed("cluster", || {
        cluster_instances_at(&part, &saliency, &features, &config.spectral(k), config.saliency_threshold)
    })?;
    info!(
        "stage=total ms={:.3} instances={}",
        start.elapsed().as_secs_f64() * 1e3,
        seg.instance_count()
    );
    Ok(seg)
}

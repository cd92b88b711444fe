//! Fully connected two-label CRF over pixels: Gaussian appearance and
//! smoothness kernels with a Potts compatibility, exact energy evaluation,
//! and parallel mean-field inference.
//!
//! Images passed to [`crf_energy`] and [`mean_field_refine`] are `[h,w,3]`
//! tensors in `[0,1]`; they are scaled to 8-bit units before entering the
//! appearance kernel, whose colour bandwidth is expressed in that scale.
//! Positions are pixel indices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::tensor::{resize_bilinear, Tensor};

/// Probabilities below this are clamped before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Largest image side refined at full resolution; larger fields are refined
/// on a downsampled grid.
pub const DEFAULT_MAX_SIDE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfParams {
    /// Appearance kernel weight.
    pub w1: f64,
    /// Smoothness kernel weight.
    pub w2: f64,
    /// Spatial bandwidth of the appearance kernel.
    pub theta_alpha: f64,
    /// Colour bandwidth of the appearance kernel (8-bit units).
    pub theta_beta: f64,
    /// Spatial bandwidth of the smoothness kernel.
    pub theta_gamma: f64,
    pub iters: usize,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            w1: 30.0,
            w2: 30.0,
            theta_alpha: 61.0,
            theta_beta: 13.0,
            theta_gamma: 1.0,
            iters: 10,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        let bandwidths = [self.theta_alpha, self.theta_beta, self.theta_gamma];
        if bandwidths.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return arg_err(format!("CRF bandwidths must be positive, got {bandwidths:?}"));
        }
        if !(self.w1.is_finite() && self.w1 >= 0.0 && self.w2.is_finite() && self.w2 >= 0.0) {
            return arg_err(format!(
                "CRF weights must be nonnegative, got w1={} w2={}",
                self.w1, self.w2
            ));
        }
        Ok(())
    }
}

/// Per-pixel `(background, salient)` probabilities, `[h,w,2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    probs: Tensor,
}

impl UnaryField {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Tensor) -> Result<Self> {
        let (_, _, c) = probs.hwc()?;
        if probs.ndim() != 3 || c != 2 {
            return arg_err(format!("unary field must be [h,w,2], got {:?}", probs.shape()));
        }
        for (i, pair) in probs.data().chunks_exact(2).enumerate() {
            if pair.iter().any(|p| !(0.0..=1.0).contains(p))
                || (pair[0] + pair[1] - 1.0).abs() > Self::SUM_TOLERANCE
            {
                return arg_err(format!("pixel {i} has invalid probabilities {pair:?}"));
            }
        }
        Ok(Self { probs })
    }

    /// Builds `(1 - s, s)` from a `[h,w]` saliency map in `[0,1]`.
    pub fn from_saliency(saliency: &Tensor) -> Result<Self> {
        let (h, w, c) = saliency.hwc()?;
        if c != 1 {
            return arg_err("saliency must have one channel");
        }
        let data = saliency
            .data()
            .iter()
            .flat_map(|&s| {
                let s = s.clamp(0.0, 1.0);
                [1.0 - s, s]
            })
            .collect();
        Self::new(Tensor::new(vec![h, w, 2], data)?)
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn height(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.probs.shape()[1]
    }

    /// `[h,w]` map of the salient-class probability.
    pub fn saliency(&self) -> Tensor {
        self.probs.channel(1).expect("field has two channels")
    }

    /// Largest deviation of any pixel's probability pair from summing to 1.
    pub fn max_normalization_error(&self) -> f64 {
        self.probs
            .data()
            .chunks_exact(2)
            .map(|p| (p[0] + p[1] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Pairwise cost between two pixels when their labels differ:
/// `w1·exp(-|Δp|²/(2θα²) - |ΔI|²/(2θβ²)) + w2·exp(-|Δp|²/(2θγ²))`.
/// Colours are RGB in `[0,255]`.
pub fn pairwise_kernel(
    p_i: (f64, f64),
    p_j: (f64, f64),
    rgb_i: [f64; 3],
    rgb_j: [f64; 3],
    params: &CrfParams,
) -> f64 {
    let dp2 = (p_i.0 - p_j.0).powi(2) + (p_i.1 - p_j.1).powi(2);
    let di2: f64 = (0..3).map(|c| (rgb_i[c] - rgb_j[c]).powi(2)).sum();
    kernel_from_distances(dp2, di2, params)
}

#[inline]
fn kernel_from_distances(dp2: f64, di2: f64, params: &CrfParams) -> f64 {
    let appearance = (-dp2 / (2.0 * params.theta_alpha * params.theta_alpha)
        - di2 / (2.0 * params.theta_beta * params.theta_beta))
        .exp();
    let smoothness = (-dp2 / (2.0 * params.theta_gamma * params.theta_gamma)).exp();
    params.w1 * appearance + params.w2 * smoothness
}

/// Pixel positions and 8-bit colours, flattened for the O(N²) loops.
struct PixelSet {
    pos: Vec<(f64, f64)>,
    rgb: Vec<[f64; 3]>,
}

impl PixelSet {
    fn new(img: &Tensor, h: usize, w: usize) -> Result<Self> {
        let (ih, iw, c) = img.hwc()?;
        if (ih, iw, c) != (h, w, 3) || img.ndim() != 3 {
            return arg_err(format!("image {:?} does not match a {h}x{w} field", img.shape()));
        }
        Ok(Self {
            pos: (0..h * w).map(|p| ((p / w) as f64, (p % w) as f64)).collect(),
            rgb: img
                .data()
                .chunks_exact(3)
                .map(|c| [c[0] * 255.0, c[1] * 255.0, c[2] * 255.0])
                .collect(),
        })
    }

    fn kernel(&self, i: usize, j: usize, params: &CrfParams) -> f64 {
        pairwise_kernel(self.pos[i], self.pos[j], self.rgb[i], self.rgb[j], params)
    }
}

/// Energy of a binary labeling (`[h,w]`, 1 = salient):
/// `-Σ ln P_i(s_i) + Σ_{i<j} k(i,j)·[s_i ≠ s_j]` over all unordered pairs.
pub fn crf_energy(labels: &Tensor, unary: &UnaryField, img: &Tensor, params: &CrfParams) -> Result<f64> {
    let (h, w) = (unary.height(), unary.width());
    if labels.shape() != [h, w] {
        return arg_err(format!(
            "labels {:?} do not match the {h}x{w} field",
            labels.shape()
        ));
    }
    if labels.data().iter().any(|&l| l != 0.0 && l != 1.0) {
        return arg_err("labels must be binary");
    }
    let pixels = PixelSet::new(img, h, w)?;
    let lab: Vec<usize> = labels.data().iter().map(|&l| l as usize).collect();
    let probs = unary.probs.data();

    let unary_term: f64 = lab
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[i * 2 + l].max(PROB_FLOOR).ln())
        .sum();
    let pairwise_term: f64 = (0..h * w)
        .map(|i| {
            ((i + 1)..h * w)
                .filter(|&j| lab[i] != lab[j])
                .map(|j| pixels.kernel(i, j, params))
                .sum::<f64>()
        })
        .sum();
    Ok(unary_term + pairwise_term)
}

/// One parallel mean-field update: every pixel reads `current` and sets
/// `Q_i(l) ∝ exp(-u_i(l) - Σ_{j≠i} k(i,j)·Q_j(¬l))`, with `u = -ln P` from
/// `unary`.
pub fn mean_field_step(
    current: &UnaryField,
    unary: &UnaryField,
    img: &Tensor,
    params: &CrfParams,
) -> Result<UnaryField> {
    params.validate()?;
    let (h, w) = (unary.height(), unary.width());
    if current.probs.shape() != unary.probs.shape() {
        return arg_err("current marginals and unary field differ in shape");
    }
    let pixels = PixelSet::new(img, h, w)?;
    Ok(step_with(current, unary, &pixels, params))
}

fn step_with(current: &UnaryField, unary: &UnaryField, pixels: &PixelSet, params: &CrfParams) -> UnaryField {
    let n = pixels.pos.len();
    let q = current.probs.data();
    let u = unary.probs.data();
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            // message[l] = Σ_j k(i,j) Q_j(¬l)
            let mut msg = [0.0f64; 2];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let k = pixels.kernel(i, j, params);
                msg[0] += k * q[j * 2 + 1];
                msg[1] += k * q[j * 2];
            }
            let e0 = u[i * 2].max(PROB_FLOOR).ln() - msg[0];
            let e1 = u[i * 2 + 1].max(PROB_FLOOR).ln() - msg[1];
            let m = e0.max(e1);
            let (a, b) = ((e0 - m).exp(), (e1 - m).exp());
            let z = a + b;
            [a / z, b / z]
        })
        .collect();
    UnaryField {
        probs: Tensor::new(current.probs.shape().to_vec(), data).expect("shape preserved"),
    }
}

/// Runs `params.iters` mean-field updates starting from the unary field.
pub fn mean_field_refine(unary: &UnaryField, img: &Tensor, params: &CrfParams) -> Result<UnaryField> {
    params.validate()?;
    let pixels = PixelSet::new(img, unary.height(), unary.width())?;
    if params.w1 == 0.0 && params.w2 == 0.0 {
        return Ok(unary.clone());
    }
    let mut q = unary.clone();
    for _ in 0..params.iters {
        q = step_with(&q, unary, &pixels, params);
    }
    Ok(q)
}

/// Mean-field refinement of a saliency map, run on a grid no larger than
/// `max_side` per side; the refined salient probability is resampled back to
/// the original size.
pub fn refine_saliency(saliency: &Tensor, img: &Tensor, params: &CrfParams, max_side: usize) -> Result<Tensor> {
    let (h, w, _) = saliency.hwc()?;
    if max_side == 0 {
        return arg_err("max_side must be positive");
    }
    let scale = (max_side as f64 / h.max(w) as f64).min(1.0);
    let (gh, gw) = (
        ((h as f64 * scale).round() as usize).max(1),
        ((w as f64 * scale).round() as usize).max(1),
    );
    let small_sal = resize_bilinear(&saliency.clone().reshape(vec![h, w])?, gh, gw)?;
    let small_img = resize_bilinear(img, gh, gw)?;
    let refined = mean_field_refine(&UnaryField::from_saliency(&small_sal)?, &small_img, params)?;
    let out = resize_bilinear(&refined.saliency(), h, w)?;
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}

/// `[h,w]` map with 1 where `P(salient) ≥ threshold`.
pub fn binarize(field: &UnaryField, threshold: f64) -> Tensor {
    field.saliency().map(|p| if p >= threshold { 1.0 } else { 0.0 })
}

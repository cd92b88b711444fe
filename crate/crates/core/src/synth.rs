//! Seeded synthetic fixtures: flat-coloured disks and rectangles on a dark
//! background, with the ground truth known by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::spectral::InstanceSegmentation;
use crate::tensor::Tensor;

pub const MAX_SHAPES: usize = 8;
/// Placement draws allowed per fixture before giving up.
pub const MAX_ATTEMPTS: usize = 2000;
/// Minimum number of background pixels between two shapes.
pub const GAP: usize = 3;
pub const BACKGROUND: [f64; 3] = [0.05, 0.05, 0.08];
/// Scale applied to RGB to form the feature map.
pub const FEATURE_SCALE: f64 = 255.0;

/// Shape colours, one per instance.
pub const PALETTE: [[f64; 3]; MAX_SHAPES] = [
    [0.90, 0.15, 0.15],
    [0.15, 0.75, 0.20],
    [0.20, 0.35, 0.95],
    [0.95, 0.85, 0.10],
    [0.85, 0.20, 0.85],
    [0.10, 0.85, 0.85],
    [0.95, 0.55, 0.10],
    [0.95, 0.95, 0.95],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    #[default]
    Disks,
    Rectangles,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    /// Centre and radius in pixel units; pixel `(y,x)` has centre `(y+0.5, x+0.5)`.
    Disk { cy: f64, cx: f64, r: f64 },
    /// Half-open pixel ranges `y0..y1`, `x0..x1`.
    Rect { y0: usize, x0: usize, y1: usize, x1: usize },
}

impl Shape {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        match *self {
            Shape::Disk { cy, cx, r } => {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                dy * dy + dx * dx <= r * r
            }
            Shape::Rect { y0, x0, y1, x1 } => (y0..y1).contains(&y) && (x0..x1).contains(&x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    #[serde(default)]
    pub kind: ShapeKind,
}

impl SynthSpec {
    pub fn disks(count: usize, height: usize, width: usize, seed: u64) -> Self {
        Self {
            count,
            height,
            width,
            seed,
            kind: ShapeKind::Disks,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFixture {
    /// `[h,w,3]` RGB in `[0,1]`.
    pub image: Tensor,
    /// `[h,w]` union of all shape masks.
    pub saliency: Tensor,
    /// `[h,w,3]` RGB scaled by [`FEATURE_SCALE`].
    pub features: Tensor,
    /// Instance `i` is the `i`-th placed shape.
    pub ground_truth: InstanceSegmentation,
    pub shapes: Vec<Shape>,
}

fn draw_shape(rng: &mut ChaCha8Rng, kind: ShapeKind, h: usize, w: usize) -> Shape {
    let side = h.min(w) as f64;
    let (lo, hi) = ((side / 10.0).max(1.5), (side / 5.0).max(2.0));
    let disk = match kind {
        ShapeKind::Disks => true,
        ShapeKind::Rectangles => false,
        ShapeKind::Mixed => rng.gen_bool(0.5),
    };
    if disk {
        let r = rng.gen_range(lo..hi);
        let cy = rng.gen_range(r..(h as f64 - r).max(r + 1e-9));
        let cx = rng.gen_range(r..(w as f64 - r).max(r + 1e-9));
        Shape::Disk { cy, cx, r }
    } else {
        let (lo, hi) = ((2.0 * lo).round() as usize, (2.0 * hi).round() as usize);
        let sh = rng.gen_range(lo..=hi).min(h);
        let sw = rng.gen_range(lo..=hi).min(w);
        let y0 = rng.gen_range(0..=h - sh);
        let x0 = rng.gen_range(0..=w - sw);
        Shape::Rect {
            y0,
            x0,
            y1: y0 + sh,
            x1: x0 + sw,
        }
    }
}

/// Generates a fixture. Shapes are drawn one at a time and rejected while
/// they come within [`GAP`] pixels of an earlier shape or cover no pixel.
pub fn synth_fixture(spec: &SynthSpec) -> Result<SynthFixture> {
    let (h, w) = (spec.height, spec.width);
    if !(1..=MAX_SHAPES).contains(&spec.count) {
        return arg_err(format!("shape count {} must lie in [1, {MAX_SHAPES}]", spec.count));
    }
    if h < 8 || w < 8 {
        return arg_err(format!("fixture size {h}x{w} is below 8x8"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // blocked[p] marks pixels within GAP of a placed shape
    let mut blocked = vec![false; h * w];
    let mut labels = vec![0u16; h * w];
    let mut shapes = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while shapes.len() < spec.count {
        if attempts == MAX_ATTEMPTS {
            return Err(Error::Placement {
                count: spec.count,
                attempts,
            });
        }
        attempts += 1;
        let shape = draw_shape(&mut rng, spec.kind, h, w);
        let pixels: Vec<usize> = (0..h * w).filter(|&p| shape.contains(p / w, p % w)).collect();
        if pixels.is_empty() || pixels.iter().any(|&p| blocked[p]) {
            continue;
        }
        let label = shapes.len() as u16 + 1;
        for &p in &pixels {
            labels[p] = label;
            let (y, x) = (p / w, p % w);
            for by in y.saturating_sub(GAP)..=(y + GAP).min(h - 1) {
                for bx in x.saturating_sub(GAP)..=(x + GAP).min(w - 1) {
                    blocked[by * w + bx] = true;
                }
            }
        }
        shapes.push(shape);
    }

    let image = Tensor::from_fn(vec![h, w, 3], |i| match labels[i / 3] {
        0 => BACKGROUND[i % 3],
        l => PALETTE[l as usize - 1][i % 3],
    });
    let saliency = Tensor::from_fn(vec![h, w], |p| if labels[p] > 0 { 1.0 } else { 0.0 });
    let features = image.map(|v| v * FEATURE_SCALE);
    let ground_truth = InstanceSegmentation::from_labels(h, w, labels)?;
    Ok(SynthFixture {
        image,
        saliency,
        features,
        ground_truth,
        shapes,
    })
}

//! SLIC superpixels over Lab images, connectivity enforcement, and
//! per-superpixel feature averaging.
//!
//! The segmentation is fully deterministic: seeds sit at the centres of a
//! regular grid (nudged to the lowest-gradient pixel of their 3x3
//! neighbourhood), the iteration count is fixed, and ties go to the
//! lower-indexed centre.

mod color;
mod connectivity;

pub use color::rgb_to_lab;
pub use connectivity::{enforce_connectivity, is_label_connected};

use crate::error::{arg_err, Result};
use crate::linalg::Matrix;
use crate::tensor::Tensor;

pub const DEFAULT_SUPERPIXELS: usize = 250;
pub const DEFAULT_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_ITERATIONS: usize = 10;

/// Position and mean colour of one superpixel. Coordinates are in pixel
/// index units (row `y`, column `x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub y: f64,
    pub x: f64,
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// A partition of an `h x w` grid into `n_superpixels` connected regions.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelPartition {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    centroids: Vec<Centroid>,
    sizes: Vec<usize>,
}

impl SuperpixelPartition {
    /// Builds a partition from a dense label map (labels `0..m`, each used at
    /// least once) and the Lab image the centroids are measured on.
    pub fn from_labels(labels: Vec<usize>, lab: &Tensor) -> Result<Self> {
        let (h, w, c) = lab.hwc()?;
        if c != 3 || labels.len() != h * w {
            return arg_err(format!(
                "{} labels do not fit Lab image {:?}",
                labels.len(),
                lab.shape()
            ));
        }
        let n = labels.iter().max().map_or(0, |m| m + 1);
        let mut sums = vec![[0.0f64; 5]; n];
        let mut sizes = vec![0usize; n];
        for (p, &l) in labels.iter().enumerate() {
            let px = &lab.data()[p * 3..p * 3 + 3];
            let s = &mut sums[l];
            s[0] += (p / w) as f64;
            s[1] += (p % w) as f64;
            s[2] += px[0];
            s[3] += px[1];
            s[4] += px[2];
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return arg_err(format!("label {empty} is unused; labels must be dense"));
        }
        let centroids = sums
            .iter()
            .zip(&sizes)
            .map(|(s, &k)| {
                let k = k as f64;
                Centroid {
                    y: s[0] / k,
                    x: s[1] / k,
                    l: s[2] / k,
                    a: s[3] / k,
                    b: s[4] / k,
                }
            })
            .collect();
        Ok(Self {
            height: h,
            width: w,
            labels,
            centroids,
            sizes,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_superpixels(&self) -> usize {
        self.sizes.len()
    }

    /// Row-major label of every pixel.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height, self.width],
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("label count matches grid")
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Blacks out every pixel of `img` (`[h,w,c]`) whose saliency is below
/// `threshold`.
pub fn mask_by_saliency(img: &Tensor, saliency: &Tensor, threshold: f64) -> Result<Tensor> {
    let (h, w, c) = img.hwc()?;
    let (sh, sw, sc) = saliency.hwc()?;
    if (sh, sw, sc) != (h, w, 1) {
        return arg_err(format!(
            "saliency {:?} does not match image {:?}",
            saliency.shape(),
            img.shape()
        ));
    }
    let mut out = img.clone();
    for (px, &s) in out.data_mut().chunks_exact_mut(c.max(1)).zip(saliency.data()) {
        if s < threshold {
            px.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

struct Cluster {
    y: f64,
    x: f64,
    lab: [f64; 3],
}

/// SLIC over a `[h,w,3]` Lab image: grid seeding for roughly `n` clusters,
/// `iters` localized Lloyd iterations under
/// `D² = d_lab² + (compactness / S)² · d_xy²` with `S = sqrt(h·w / n)`, then
/// connectivity enforcement with a minimum region size of `h·w / (4n)`.
pub fn slic_segment(lab: &Tensor, n: usize, compactness: f64, iters: usize) -> Result<SuperpixelPartition> {
    let (h, w, c) = lab.hwc()?;
    if lab.ndim() != 3 || c != 3 {
        return arg_err(format!("expected a [h,w,3] Lab image, got {:?}", lab.shape()));
    }
    if n == 0 || n > h * w {
        return arg_err(format!("superpixel count {n} must lie in [1, {}]", h * w));
    }
    if iters == 0 {
        return arg_err("SLIC needs at least one iteration");
    }
    if !(compactness.is_finite() && compactness >= 0.0) {
        return arg_err(format!("compactness {compactness} must be finite and nonnegative"));
    }

    let data = lab.data();
    let pixel = |p: usize| -> [f64; 3] { [data[p * 3], data[p * 3 + 1], data[p * 3 + 2]] };
    let step = ((h * w) as f64 / n as f64).sqrt();
    let spatial_weight = (compactness / step).powi(2);

    let mut clusters = seed_clusters(lab, h, w, n);
    let mut labels = vec![usize::MAX; h * w];
    let mut best = vec![f64::INFINITY; h * w];
    let radius = step.ceil() as isize;

    for _ in 0..iters {
        labels.iter_mut().for_each(|l| *l = usize::MAX);
        best.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, cl) in clusters.iter().enumerate() {
            let cy = cl.y.floor() as isize;
            let cx = cl.x.floor() as isize;
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius) as usize).min(h - 1);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let d = distance2(cl, &pixel(p), y, x, spatial_weight);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }
        // pixels no window reached fall back to the globally nearest centre
        for p in 0..h * w {
            if labels[p] == usize::MAX {
                let px = pixel(p);
                let (y, x) = (p / w, p % w);
                for (k, cl) in clusters.iter().enumerate() {
                    let d = distance2(cl, &px, y, x, spatial_weight);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 5]; clusters.len()];
        let mut counts = vec![0usize; clusters.len()];
        for (p, &k) in labels.iter().enumerate() {
            let px = pixel(p);
            let s = &mut sums[k];
            s[0] += (p / w) as f64 + 0.5;
            s[1] += (p % w) as f64 + 0.5;
            s[2] += px[0];
            s[3] += px[1];
            s[4] += px[2];
            counts[k] += 1;
        }
        for ((cl, s), &k) in clusters.iter_mut().zip(&sums).zip(&counts) {
            if k > 0 {
                let k = k as f64;
                cl.y = s[0] / k;
                cl.x = s[1] / k;
                cl.lab = [s[2] / k, s[3] / k, s[4] / k];
            }
        }
    }

    let min_size = ((h * w) / (4 * n)).max(1);
    let dense = enforce_connectivity(&labels, h, w, min_size);
    SuperpixelPartition::from_labels(dense, lab)
}

fn distance2(cl: &Cluster, px: &[f64; 3], y: usize, x: usize, spatial_weight: f64) -> f64 {
    let dl = cl.lab[0] - px[0];
    let da = cl.lab[1] - px[1];
    let db = cl.lab[2] - px[2];
    let dy = cl.y - (y as f64 + 0.5);
    let dx = cl.x - (x as f64 + 0.5);
    dl * dl + da * da + db * db + spatial_weight * (dy * dy + dx * dx)
}

/// Grid of `ny x nx ≈ n` seeds at cell centres (continuous coordinates,
/// pixel `(y, x)` centred at `(y + 0.5, x + 0.5)`), each moved to a pixel
/// of strictly lower gradient in its 3x3 neighbourhood when one exists.
fn seed_clusters(lab: &Tensor, h: usize, w: usize, n: usize) -> Vec<Cluster> {
    let ny = ((n as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let nx = ((n as f64 / ny as f64).round() as usize).clamp(1, w);
    let data = lab.data();
    let at = |y: usize, x: usize| -> [f64; 3] {
        let p = (y * w + x) * 3;
        [data[p], data[p + 1], data[p + 2]]
    };
    let gradient = |y: usize, x: usize| -> f64 {
        let sq = |a: [f64; 3], b: [f64; 3]| -> f64 { (0..3).map(|i| (a[i] - b[i]).powi(2)).sum() };
        sq(at((y + 1).min(h - 1), x), at(y.saturating_sub(1), x))
            + sq(at(y, (x + 1).min(w - 1)), at(y, x.saturating_sub(1)))
    };

    let mut seeds = Vec::with_capacity(ny * nx);
    for i in 0..ny {
        for j in 0..nx {
            let cy = (i as f64 + 0.5) * h as f64 / ny as f64;
            let cx = (j as f64 + 0.5) * w as f64 / nx as f64;
            let by = (cy.floor() as usize).min(h - 1);
            let bx = (cx.floor() as usize).min(w - 1);
            let mut best = (gradient(by, bx), by, bx);
            for y in by.saturating_sub(1)..=(by + 1).min(h - 1) {
                for x in bx.saturating_sub(1)..=(bx + 1).min(w - 1) {
                    let g = gradient(y, x);
                    if g < best.0 {
                        best = (g, y, x);
                    }
                }
            }
            let (_, sy, sx) = best;
            let (y, x) = if (sy, sx) == (by, bx) {
                (cy, cx)
            } else {
                (sy as f64 + 0.5, sx as f64 + 0.5)
            };
            seeds.push(Cluster {
                y,
                x,
                lab: at(sy, sx),
            });
        }
    }
    seeds
}

/// Mean of `t` (`[h,w,c]`) over each superpixel, as an `n x c` matrix.
pub fn superpixel_means(part: &SuperpixelPartition, t: &Tensor) -> Result<Matrix> {
    let (h, w, c) = t.hwc()?;
    if (h, w) != (part.height, part.width) {
        return arg_err(format!(
            "tensor {:?} does not match the {}x{} partition",
            t.shape(),
            part.height,
            part.width
        ));
    }
    let n = part.n_superpixels();
    let mut out = Matrix::zeros(n, c);
    if c == 0 {
        return Ok(out);
    }
    for (px, &l) in t.data().chunks_exact(c).zip(&part.labels) {
        for (acc, v) in out.row_mut(l).iter_mut().zip(px) {
            *acc += v;
        }
    }
    for (l, &size) in part.sizes.iter().enumerate() {
        let inv = 1.0 / size as f64;
        out.row_mut(l).iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_lab(h: usize, w: usize, color: [f64; 3]) -> Tensor {
        Tensor::from_fn(vec![h, w, 3], |i| color[i % 3])
    }

    #[test]
    fn single_pixel_single_superpixel() {
        let part = slic_segment(&uniform_lab(1, 1, [50.0, 0.0, 0.0]), 1, 10.0, 1).unwrap();
        assert_eq!(part.n_superpixels(), 1);
        assert_eq!(part.labels(), &[0]);
        assert_eq!(part.sizes(), &[1]);
    }

    #[test]
    fn uniform_image_splits_into_grid_blocks() {
        let part = slic_segment(&uniform_lab(20, 20, [40.0, 10.0, -5.0]), 4, 10.0, 10).unwrap();
        assert_eq!(part.n_superpixels(), 4);
        for p in 0..400 {
            let (y, x) = (p / 20, p % 20);
            let expected = (y / 10) * 2 + x / 10;
            assert_eq!(part.labels()[p], expected, "pixel ({y},{x})");
        }
        assert_eq!(part.sizes(), &[100; 4]);
        assert_eq!((part.centroids()[3].y, part.centroids()[3].x), (14.5, 14.5));
    }

    #[test]
    fn two_tone_split_follows_boundary() {
        // left 8 columns dark, right 12 columns bright; the grid seam (x = 10)
        // is not on the tone boundary
        let lab = Tensor::from_fn(vec![20, 20, 3], |i| {
            let x = (i / 3) % 20;
            match (i % 3, x < 8) {
                (0, true) => 20.0,
                (0, false) => 80.0,
                _ => 0.0,
            }
        });
        let part = slic_segment(&lab, 2, 10.0, 10).unwrap();
        assert_eq!(part.n_superpixels(), 2);
        for p in 0..400 {
            assert_eq!(part.labels()[p], usize::from(p % 20 >= 8));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let lab = uniform_lab(2, 2, [0.0; 3]);
        assert!(slic_segment(&lab, 5, 10.0, 1).is_err());
        assert!(slic_segment(&lab, 0, 10.0, 1).is_err());
        assert!(slic_segment(&lab, 1, 10.0, 0).is_err());
        assert!(slic_segment(&Tensor::zeros(vec![2, 2, 1]), 1, 10.0, 1).is_err());
    }

    #[test]
    fn means_of_constant_and_coordinate_features() {
        // top row label 0, bottom row label 1
        let lab = uniform_lab(2, 2, [0.0; 3]);
        let part = SuperpixelPartition::from_labels(vec![0, 0, 1, 1], &lab).unwrap();
        let constant = Tensor::filled(vec![2, 2, 2], 3.5);
        let m = superpixel_means(&part, &constant).unwrap();
        assert_eq!(m.data(), &[3.5; 4]);

        let ycoord = Tensor::from_fn(vec![2, 2, 1], |i| (i / 2) as f64);
        let m = superpixel_means(&part, &ycoord).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0]);

        let empty = Tensor::zeros(vec![2, 2, 0]);
        let m = superpixel_means(&part, &empty).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 0));

        assert!(superpixel_means(&part, &Tensor::zeros(vec![3, 2, 1])).is_err());
    }

    #[test]
    fn masking_blacks_out_background() {
        let img = Tensor::filled(vec![1, 3, 3], 0.8);
        let sal = Tensor::new(vec![1, 3], vec![0.2, 0.5, 0.9]).unwrap();
        let out = mask_by_saliency(&img, &sal, 0.5).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8]);
    }
}

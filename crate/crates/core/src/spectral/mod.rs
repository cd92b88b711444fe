//! Salient instance clustering over superpixels.
//!
//! Each superpixel that contains salient pixels becomes a graph node carrying
//! the mean deep feature and the mean position of those pixels. Nodes are
//! linked by a feature/spatial affinity, embedded with the `k` lowest
//! eigenvectors of the normalized Laplacian, and grouped by k-means seeded
//! at evenly spaced fractiles of the embedding. No step draws random numbers.

mod affinity;
mod eigen;
mod kmeans;

pub use affinity::{
    build_affinity, normalized_laplacian, AffinityGraph, SpectralParams, DEFAULT_LAMBDA, DEFAULT_SIGMA2,
};
pub use eigen::{smallest_k_eigenvectors, symmetric_eigen, SpectralEmbedding};
pub use kmeans::{
    fractile_percentages, fractile_positions, kmeans, quantile_init, within_cluster_ss, KMeans,
    DEFAULT_MAX_ITERS,
};

use log::warn;

use crate::error::{arg_err, Error, Result};
use crate::linalg::{norm, Matrix};
use crate::slic::SuperpixelPartition;
use crate::tensor::Tensor;

/// Pixels with saliency below this value are background.
pub const SALIENCY_THRESHOLD: f64 = 0.5;

/// Per-pixel instance labels: 0 is background, `1..=k` are instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSegmentation {
    height: usize,
    width: usize,
    labels: Vec<u16>,
    confidences: Vec<f64>,
}

impl InstanceSegmentation {
    /// Wraps a label map. `confidences` must have one entry per instance
    /// label `1..=max(labels)`.
    pub fn new(height: usize, width: usize, labels: Vec<u16>, confidences: Vec<f64>) -> Result<Self> {
        if labels.len() != height * width {
            return arg_err(format!("{} labels for a {height}x{width} grid", labels.len()));
        }
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        if confidences.len() < max {
            return arg_err(format!("{} confidences for {max} instances", confidences.len()));
        }
        Ok(Self {
            height,
            width,
            labels,
            confidences,
        })
    }

    /// Label map without confidence scores (all set to 1).
    pub fn from_labels(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        Self::new(height, width, labels, vec![1.0; max])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Mean saliency of each instance, indexed by `label - 1`.
    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn instance_count(&self) -> usize {
        self.confidences.len()
    }

    pub fn label_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height, self.width],
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("label count matches grid")
    }
}

/// Graph nodes: superpixels restricted to their salient pixels.
struct Nodes {
    superpixel_to_node: Vec<Option<usize>>,
    features: Matrix,
    positions: Matrix,
}

fn collect_nodes(
    part: &SuperpixelPartition,
    saliency: &Tensor,
    features: &Tensor,
    threshold: f64,
) -> Nodes {
    let (h, w) = (part.height(), part.width());
    let c = features.shape()[2];
    let n_sp = part.n_superpixels();
    let mut sums = vec![vec![0.0; c]; n_sp];
    let mut pos = vec![[0.0f64; 2]; n_sp];
    let mut counts = vec![0usize; n_sp];
    for (p, &sp) in part.labels().iter().enumerate() {
        if saliency.data()[p] < threshold {
            continue;
        }
        counts[sp] += 1;
        for (acc, v) in sums[sp].iter_mut().zip(&features.data()[p * c..(p + 1) * c]) {
            *acc += v;
        }
        pos[sp][0] += ((p / w) as f64 + 0.5) / h as f64;
        pos[sp][1] += ((p % w) as f64 + 0.5) / w as f64;
    }
    let mut superpixel_to_node = vec![None; n_sp];
    let mut feat_rows = Vec::new();
    let mut pos_rows = Vec::new();
    for sp in 0..n_sp {
        if counts[sp] == 0 {
            continue;
        }
        superpixel_to_node[sp] = Some(feat_rows.len());
        let inv = 1.0 / counts[sp] as f64;
        feat_rows.push(sums[sp].iter().map(|v| v * inv).collect::<Vec<_>>());
        pos_rows.push(vec![pos[sp][0] * inv, pos[sp][1] * inv]);
    }
    let n = feat_rows.len();
    Nodes {
        superpixel_to_node,
        features: Matrix::from_vec(n, c, feat_rows.concat()).expect("rows have c entries"),
        positions: Matrix::from_vec(n, 2, pos_rows.concat()).expect("rows have 2 entries"),
    }
}

/// Splits the salient region into `p.k` instances, using the default
/// saliency threshold of 0.5.
pub fn cluster_instances(
    part: &SuperpixelPartition,
    saliency: &Tensor,
    features: &Tensor,
    p: &SpectralParams,
) -> Result<InstanceSegmentation> {
    cluster_instances_at(part, saliency, features, p, SALIENCY_THRESHOLD)
}

/// [`cluster_instances`] with an explicit saliency threshold.
///
/// `saliency` is `[h,w]` and `features` `[h,w,c]`, both on the partition's
/// grid. Instances are numbered so that instance 1 owns the first labeled
/// pixel in raster order, instance 2 the first pixel not in instance 1, and
/// so on.
pub fn cluster_instances_at(
    part: &SuperpixelPartition,
    saliency: &Tensor,
    features: &Tensor,
    p: &SpectralParams,
    threshold: f64,
) -> Result<InstanceSegmentation> {
    p.validate()?;
    let (h, w) = (part.height(), part.width());
    let (sh, sw, sc) = saliency.hwc()?;
    if (sh, sw, sc) != (h, w, 1) {
        return arg_err(format!(
            "saliency {:?} does not match the {h}x{w} partition",
            saliency.shape()
        ));
    }
    let (fh, fw, _) = features.hwc()?;
    if (fh, fw) != (h, w) || features.ndim() != 3 {
        return arg_err(format!(
            "features {:?} do not match the {h}x{w} partition",
            features.shape()
        ));
    }

    let nodes = collect_nodes(part, saliency, features, threshold);
    let n = nodes.features.rows();
    if n == 0 {
        warn!("salient region is empty; returning an all-background segmentation");
        return InstanceSegmentation::new(h, w, vec![0; h * w], Vec::new());
    }
    if n < p.k {
        return Err(Error::InstanceCount {
            requested: p.k,
            feasible: n,
        });
    }
    if p.k > u16::MAX as usize {
        return arg_err(format!("k = {} exceeds the 16-bit label range", p.k));
    }

    let graph = build_affinity(&nodes.features, &nodes.positions, p)?;
    let laplacian = normalized_laplacian(&graph)?;
    let mut embedding = smallest_k_eigenvectors(&laplacian, p.k)?.vectors;
    for i in 0..n {
        let row = embedding.row_mut(i);
        let len = norm(row);
        if len > 0.0 {
            row.iter_mut().for_each(|v| *v /= len);
        }
    }
    let init = quantile_init(&embedding, p.k)?;
    let clusters = kmeans(&embedding, &init, DEFAULT_MAX_ITERS)?;

    // paint and canonicalize: clusters are renumbered by first raster pixel
    let mut rename = vec![0u16; p.k];
    let mut next = 0u16;
    let mut labels = vec![0u16; h * w];
    for (px, &sp) in part.labels().iter().enumerate() {
        if saliency.data()[px] < threshold {
            continue;
        }
        let node = nodes.superpixel_to_node[sp].expect("salient pixel belongs to a node");
        let cluster = clusters.labels[node];
        if rename[cluster] == 0 {
            next += 1;
            rename[cluster] = next;
        }
        labels[px] = rename[cluster];
    }

    let mut sums = vec![0.0; next as usize];
    let mut counts = vec![0usize; next as usize];
    for (px, &l) in labels.iter().enumerate() {
        if l > 0 {
            sums[l as usize - 1] += saliency.data()[px];
            counts[l as usize - 1] += 1;
        }
    }
    let confidences = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    InstanceSegmentation::new(h, w, labels, confidences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slic::{rgb_to_lab, slic_segment};

    /// Two coloured squares on black; saliency marks both.
    fn two_squares() -> (Tensor, Tensor) {
        let (h, w) = (16, 24);
        let img = Tensor::from_fn(vec![h, w, 3], |i| {
            let (p, ch) = (i / 3, i % 3);
            let (y, x) = (p / w, p % w);
            if (4..12).contains(&y) && (2..9).contains(&x) {
                [0.9, 0.1, 0.1][ch]
            } else if (4..12).contains(&y) && (14..22).contains(&x) {
                [0.1, 0.2, 0.9][ch]
            } else {
                0.0
            }
        });
        let sal = Tensor::from_fn(vec![h, w], |p| {
            if img.data()[p * 3..p * 3 + 3].iter().any(|&v| v > 0.0) {
                1.0
            } else {
                0.0
            }
        });
        (img, sal)
    }

    #[test]
    fn separates_two_squares() {
        let (img, sal) = two_squares();
        let part = slic_segment(&rgb_to_lab(&img).unwrap(), 24, 10.0, 10).unwrap();
        let feats = img.map(|v| v * 255.0);
        let seg = cluster_instances(&part, &sal, &feats, &SpectralParams::with_k(2)).unwrap();
        for (p, &l) in seg.labels().iter().enumerate() {
            let x = p % 24;
            let expected = if sal.data()[p] < 0.5 {
                0
            } else if x < 12 {
                1
            } else {
                2
            };
            assert_eq!(l, expected, "pixel {p}");
        }
        assert_eq!(seg.confidences(), &[1.0, 1.0]);
    }

    #[test]
    fn single_instance_covers_salient_region() {
        let (img, sal) = two_squares();
        let part = slic_segment(&rgb_to_lab(&img).unwrap(), 24, 10.0, 10).unwrap();
        let seg = cluster_instances(&part, &sal, &img, &SpectralParams::with_k(1)).unwrap();
        for (l, s) in seg.labels().iter().zip(sal.data()) {
            assert_eq!(*l, if *s >= 0.5 { 1 } else { 0 });
        }
    }

    #[test]
    fn empty_salient_region_is_all_background() {
        let (img, _) = two_squares();
        let part = slic_segment(&rgb_to_lab(&img).unwrap(), 24, 10.0, 10).unwrap();
        let sal = Tensor::zeros(vec![16, 24]);
        let seg = cluster_instances(&part, &sal, &img, &SpectralParams::with_k(3)).unwrap();
        assert!(seg.labels().iter().all(|&l| l == 0));
        assert_eq!(seg.instance_count(), 0);
    }

    #[test]
    fn too_many_instances_reports_feasible_maximum() {
        let (img, sal) = two_squares();
        let part = slic_segment(&rgb_to_lab(&img).unwrap(), 4, 10.0, 10).unwrap();
        let err = cluster_instances(&part, &sal, &img, &SpectralParams::with_k(500)).unwrap_err();
        match err {
            Error::InstanceCount { requested, feasible } => {
                assert_eq!(requested, 500);
                assert!(feasible >= 1 && feasible < 500);
            }
            other => panic!("unexpected error {other}"),
        }
    }
}

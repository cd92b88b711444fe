use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::linalg::{distance, Matrix};

pub const DEFAULT_LAMBDA: f64 = 3.0;
pub const DEFAULT_SIGMA2: f64 = 10.0;

/// Affinity bandwidths and the number of clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    /// Weight of the spatial distance term.
    pub lambda: f64,
    /// Bandwidth of the feature-distance term.
    pub sigma2: f64,
    pub k: usize,
}

impl SpectralParams {
    /// Default bandwidths with `k` clusters.
    pub fn with_k(k: usize) -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            sigma2: DEFAULT_SIGMA2,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return arg_err(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return arg_err(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.k == 0 {
            return arg_err("cluster count k must be at least 1");
        }
        Ok(())
    }
}

/// Dense symmetric affinity matrix with its degree vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    w: Matrix,
    degrees: Vec<f64>,
}

impl AffinityGraph {
    /// Wraps a precomputed affinity matrix, which must be square, exactly
    /// symmetric and nonnegative, with positive row sums.
    pub fn from_matrix(w: Matrix) -> Result<Self> {
        if w.max_asymmetry() != Some(0.0) {
            return arg_err("affinity matrix must be square and exactly symmetric");
        }
        if w.data().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return arg_err("affinities must be finite and nonnegative");
        }
        let degrees: Vec<f64> = (0..w.rows()).map(|i| w.row(i).iter().sum()).collect();
        Ok(Self { w, degrees })
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

/// `w_ij = exp(-‖c_i - c_j‖ / σ²) / (1 + λ‖d_i - d_j‖)` over feature rows
/// `c` and position rows `d` (Euclidean norms, the feature norm unsquared).
pub fn build_affinity(features: &Matrix, positions: &Matrix, p: &SpectralParams) -> Result<AffinityGraph> {
    p.validate()?;
    let n = features.rows();
    if n == 0 {
        return arg_err("affinity graph needs at least one node");
    }
    if positions.rows() != n {
        return arg_err(format!("{} feature rows but {} positions", n, positions.rows()));
    }
    if features.data().iter().chain(positions.data()).any(|v| !v.is_finite()) {
        return arg_err("feature and position rows must be finite");
    }
    let mut w = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let feat = distance(features.row(i), features.row(j));
            let space = distance(positions.row(i), positions.row(j));
            let v = (-feat / p.sigma2).exp() / (1.0 + p.lambda * space);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    AffinityGraph::from_matrix(w)
}

/// `D^{-1/2} (D - W) D^{-1/2}`, mirrored so the result is exactly symmetric.
pub fn normalized_laplacian(g: &AffinityGraph) -> Result<Matrix> {
    if let Some(i) = g.degrees.iter().position(|&d| !(d > 0.0)) {
        return arg_err(format!("node {i} has zero degree"));
    }
    let n = g.len();
    let d = &g.degrees;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = (d[i] - g.w[(i, i)]) / d[i];
        for j in (i + 1)..n {
            let v = -g.w[(i, j)] / (d[i] * d[j]).sqrt();
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_value_with_default_bandwidths() {
        // ‖Δc‖ = 10 (a 6-8-10 triangle), ‖Δd‖ = 1
        let feats = Matrix::from_rows(&[vec![0.0, 0.0], vec![6.0, 8.0]]).unwrap();
        let pos = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = build_affinity(&feats, &pos, &SpectralParams::with_k(2)).unwrap();
        let expected = (-1.0f64).exp() / 4.0;
        assert!((g.weights()[(0, 1)] - expected).abs() < 1e-12);
        assert!((expected - 0.091_970).abs() < 1e-6);
        assert_eq!(g.weights()[(0, 0)], 1.0);
        assert_eq!(g.degrees()[0], 1.0 + g.weights()[(0, 1)]);
    }

    #[test]
    fn identical_nodes_have_unit_affinity_and_decay_is_monotone() {
        let pos = Matrix::zeros(2, 2);
        let p = SpectralParams::with_k(1);
        let mut last = f64::INFINITY;
        for d in [0.0, 1.0, 5.0, 50.0, 500.0] {
            let feats = Matrix::from_rows(&[vec![0.0], vec![d]]).unwrap();
            let v = build_affinity(&feats, &pos, &p).unwrap().weights()[(0, 1)];
            if d == 0.0 {
                assert_eq!(v, 1.0);
            }
            assert!(v < last || d == 0.0);
            last = v;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn two_node_complete_graph_laplacian() {
        let g = AffinityGraph::from_matrix(Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap()).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        assert_eq!(l.data(), &[0.5, -0.5, -0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = SpectralParams::with_k(1);
        let feats = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(build_affinity(&feats, &Matrix::zeros(1, 2), &p).is_err());
        let feats = Matrix::zeros(2, 1);
        assert!(build_affinity(&feats, &Matrix::zeros(3, 2), &p).is_err());
        let zero = AffinityGraph::from_matrix(Matrix::zeros(2, 2)).unwrap();
        assert!(normalized_laplacian(&zero).is_err());
        assert!(SpectralParams { sigma2: 0.0, ..p }.validate().is_err());
    }
}

use crate::error::{arg_err, Result};
use crate::linalg::Matrix;

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// The `k` lowest eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// `n x k`, column `j` is the eigenvector of `eigenvalues[j]`.
    pub vectors: Matrix,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order (ties keep their diagonal order)
/// and the matching orthonormal eigenvectors as columns. Each eigenvector
/// is signed so its largest-magnitude entry is positive.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_square() {
        return arg_err(format!("eigensolver needs a square matrix, got {}x{}", m.rows(), m.cols()));
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return arg_err("matrix has non-finite entries");
    }
    let scale = m.data().iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let asym = m.max_asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOLERANCE * scale {
        return arg_err(format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"));
    }

    let n = m.rows();
    // work on the symmetrized copy so tiny input asymmetry cannot bias rotations
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    let mut v = Matrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
            .0;
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in col.iter().enumerate() {
            vectors[(i, dst)] = sign * x;
        }
    }
    Ok((values, vectors))
}

/// Zeroes `a[p][q]` with one Jacobi rotation and accumulates it into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    // negligible next to both diagonal entries: drop it outright
    let g = 100.0 * apq.abs();
    if a[(p, p)].abs() + g == a[(p, p)].abs() && a[(q, q)].abs() + g == a[(q, q)].abs() {
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
        return;
    }
    let n = a.rows();
    let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Eigenvectors of the `k` smallest eigenvalues of a symmetric matrix.
pub fn smallest_k_eigenvectors(m: &Matrix, k: usize) -> Result<SpectralEmbedding> {
    if k > m.rows() {
        return arg_err(format!("asked for {k} eigenvectors of a {}x{} matrix", m.rows(), m.cols()));
    }
    let (values, vectors) = symmetric_eigen(m)?;
    let n = m.rows();
    let mut u = Matrix::zeros(n, k);
    for i in 0..n {
        u.row_mut(i).copy_from_slice(&vectors.row(i)[..k]);
    }
    Ok(SpectralEmbedding {
        vectors: u,
        eigenvalues: values[..k].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(m: &Matrix, values: &[f64], vectors: &Matrix) -> f64 {
        (0..values.len())
            .map(|j| {
                let col = vectors.column(j);
                m.mul_vec(&col)
                    .iter()
                    .zip(&col)
                    .map(|(a, b)| (a - values[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = smallest_k_eigenvectors(&Matrix::identity(3), 2).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        let gram = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert_eq!(gram, Matrix::identity(2));
    }

    #[test]
    fn diagonal_matrix_gives_axis_vectors() {
        let m = Matrix::from_diag(&[3.0, 1.0, 2.0]);
        let e = smallest_k_eigenvectors(&m, 2).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0]);
        assert_eq!(e.vectors.column(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(e.vectors.column(1), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (values, vectors) = symmetric_eigen(&m).unwrap();
        assert!((values[0] - 1.0).abs() < 1e-15 && (values[1] - 3.0).abs() < 1e-15);
        assert!(residual(&m, &values, &vectors) < 1e-14);
        // sign convention: largest-magnitude entry positive
        let c1 = vectors.column(1);
        assert!(c1[0] > 0.0 && c1[1] > 0.0);
    }

    #[test]
    fn dense_matrix_residuals() {
        let n = 7;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 31 + j * 17) % 13) as f64 / 7.0 - 0.8;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let (values, vectors) = symmetric_eigen(&m).unwrap();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        assert!(residual(&m, &values, &vectors) < 1e-12);
        let gram = vectors.transpose().matmul(&vectors).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_and_oversized_requests() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(symmetric_eigen(&m).is_err());
        assert!(smallest_k_eigenvectors(&Matrix::identity(2), 3).is_err());
        assert!(symmetric_eigen(&Matrix::zeros(2, 3)).is_err());
    }
}

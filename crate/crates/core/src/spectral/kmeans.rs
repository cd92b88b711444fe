use crate::error::{arg_err, Result};
use crate::linalg::{squared_distance, Matrix};

pub const DEFAULT_MAX_ITERS: usize = 300;

/// Percentile (0..100) of the sorted rows picked for each of `k` initial
/// centres: the midpoints of `k` equal-width bins, `50/k + (i-1)·100/k`.
pub fn fractile_percentages(k: usize) -> Vec<f64> {
    (1..=k)
        .map(|i| 50.0 / k as f64 + (i - 1) as f64 * 100.0 / k as f64)
        .collect()
}

/// Zero-based sorted positions of the fractile rows for `n` points:
/// `floor((2i - 1)·n / (2k))`, computed in integers.
pub fn fractile_positions(n: usize, k: usize) -> Vec<usize> {
    (1..=k).map(|i| ((2 * i - 1) * n / (2 * k)).min(n.saturating_sub(1))).collect()
}

/// Initial centres for k-means: sort the rows of `u` ascending by their
/// first column (ties by row index) and take the rows at the fractile
/// positions.
pub fn quantile_init(u: &Matrix, k: usize) -> Result<Matrix> {
    let n = u.rows();
    if k == 0 {
        return arg_err("k must be at least 1");
    }
    if n < k {
        return arg_err(format!("cannot pick {k} centres from {n} points"));
    }
    if u.cols() == 0 {
        return arg_err("embedding has no columns");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| u[(a, 0)].total_cmp(&u[(b, 0)]).then(a.cmp(&b)));
    let mut centers = Matrix::zeros(k, u.cols());
    for (c, pos) in fractile_positions(n, k).into_iter().enumerate() {
        centers.row_mut(c).copy_from_slice(u.row(order[pos]));
    }
    Ok(centers)
}

/// Outcome of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Cluster index of every row, each cluster non-empty.
    pub labels: Vec<usize>,
    pub centers: Matrix,
    /// Lloyd updates performed from the given centres before the assignment
    /// stopped changing.
    pub iterations: usize,
    /// Centre relocations accepted by the swap search.
    pub swaps: usize,
}

/// Lloyd's algorithm from the given centres, followed by a swap search.
///
/// Duplicate starting centres are nudged apart by `1e-9` of each column's
/// range; ties assign to the lowest centre index; an empty cluster takes
/// over the point farthest from its own centre. Once the assignment is
/// stable, each centre in turn is moved onto each data point and Lloyd is
/// rerun; the first relocation that lowers the within-cluster sum of squares
/// is kept and the search restarts, until no relocation helps.
pub fn kmeans(u: &Matrix, centers: &Matrix, max_iters: usize) -> Result<KMeans> {
    let (n, d) = (u.rows(), u.cols());
    let k = centers.rows();
    if k == 0 || centers.cols() != d {
        return arg_err(format!(
            "centres are {}x{}, data has {d} columns",
            centers.rows(),
            centers.cols()
        ));
    }
    if n < k {
        return arg_err(format!("cannot form {k} non-empty clusters from {n} points"));
    }
    let mut best = lloyd(u, centers, max_iters);
    let mut best_ss = within_cluster_ss(u, &best.labels);
    let mut swaps = 0;
    'search: while best_ss > 0.0 && k > 1 {
        for r in 0..k {
            for p in 0..n {
                if best.centers.row(r) == u.row(p) {
                    continue;
                }
                let mut moved = best.centers.clone();
                moved.row_mut(r).copy_from_slice(u.row(p));
                let candidate = lloyd(u, &moved, max_iters);
                let ss = within_cluster_ss(u, &candidate.labels);
                if ss < best_ss * (1.0 - 1e-12) {
                    best = KMeans {
                        iterations: best.iterations,
                        ..candidate
                    };
                    best_ss = ss;
                    swaps += 1;
                    continue 'search;
                }
            }
        }
        break;
    }
    Ok(KMeans { swaps, ..best })
}

fn lloyd(u: &Matrix, centers: &Matrix, max_iters: usize) -> KMeans {
    let mut centers = separate_duplicates(u, centers);
    let mut labels = assign(u, &centers);
    fill_empty(u, &mut labels, &mut centers);

    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        centers = means(u, &labels, &centers);
        let mut next = assign(u, &centers);
        fill_empty(u, &mut next, &mut centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    KMeans {
        labels,
        centers,
        iterations,
        swaps: 0,
    }
}

/// Sum of squared distances from each row to its cluster mean.
pub fn within_cluster_ss(u: &Matrix, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let centers = means(u, labels, &Matrix::zeros(k, u.cols()));
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(u.row(i), centers.row(l)))
        .sum()
}

fn separate_duplicates(u: &Matrix, centers: &Matrix) -> Matrix {
    let d = u.cols();
    let ranges: Vec<f64> = (0..d)
        .map(|c| {
            let (lo, hi) = (0..u.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(u[(r, c)]), hi.max(u[(r, c)]))
            });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let mut out = centers.clone();
    for i in 1..out.rows() {
        let mut bump = 0.0;
        while (0..i).any(|j| out.row(j) == out.row(i)) {
            bump += 1.0;
            for c in 0..d {
                out[(i, c)] = centers[(i, c)] + bump * 1e-9 * ranges[c];
            }
        }
    }
    out
}

fn assign(u: &Matrix, centers: &Matrix) -> Vec<usize> {
    (0..u.rows())
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for c in 0..centers.rows() {
                let d = squared_distance(u.row(i), centers.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect()
}

/// Means of the assigned rows; clusters without rows keep `fallback`.
fn means(u: &Matrix, labels: &[usize], fallback: &Matrix) -> Matrix {
    let mut sums = Matrix::zeros(fallback.rows(), u.cols());
    let mut counts = vec![0usize; fallback.rows()];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (acc, v) in sums.row_mut(l).iter_mut().zip(u.row(i)) {
            *acc += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            sums.row_mut(c).copy_from_slice(fallback.row(c));
        } else {
            let inv = 1.0 / count as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
        }
    }
    sums
}

fn fill_empty(u: &Matrix, labels: &mut [usize], centers: &mut Matrix) {
    let k = centers.rows();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..u.rows())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (squared_distance(u.row(i), centers.row(labels[i])), i))
            .fold(None, |best: Option<(f64, usize)>, cand| match best {
                Some(b) if b.0 >= cand.0 => Some(b),
                _ => Some(cand),
            });
        if let Some((_, i)) = donor {
            counts[labels[i]] -= 1;
            labels[i] = empty;
            counts[empty] = 1;
            centers.row_mut(empty).copy_from_slice(u.row(i));
        }
    }
}

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

use super::gradcheck::ScalarMap;

/// Lower bound applied to probabilities before taking their logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Partial derivatives of `loss` with respect to each prediction.
    pub grad: Tensor,
    /// Set when a true-class probability fell below [`LOG_CLAMP`].
    pub clamped: bool,
}

/// Class-weighted cross-entropy
/// `-(1/N) Σ_i Σ_c weight_c · y_ic · ln(yhat_ic)` over `[N, C]` predictions
/// and one-hot targets. Weights default to one.
pub fn weighted_cross_entropy(
    yhat: &Tensor,
    y: &Tensor,
    class_weights: Option<&[f64]>,
) -> Result<CrossEntropy> {
    let (n, c) = check_pair(yhat, y)?;
    let weights = resolve_weights(class_weights, c)?;
    for (i, row) in yhat.data().chunks_exact(c).enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return arg_err(format!("prediction row {i} has entries outside [0,1]"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return arg_err(format!("prediction row {i} sums to {sum}, not 1"));
        }
    }
    for (i, row) in y.data().chunks_exact(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return arg_err(format!("target row {i} is not one-hot"));
        }
    }
    Ok(evaluate(yhat, y, &weights, n, c))
}

/// The loss as a function of the raw prediction tensor, for gradient
/// checking. Skips the normalization checks so off-simplex perturbations are
/// allowed.
#[derive(Debug, Clone)]
pub struct CrossEntropyMap {
    target: Tensor,
    weights: Vec<f64>,
}

impl CrossEntropyMap {
    pub fn new(target: Tensor, class_weights: Option<&[f64]>) -> Result<Self> {
        let &[_, c] = target.shape() else {
            return arg_err(format!("targets must be [N,C], got {:?}", target.shape()));
        };
        let weights = resolve_weights(class_weights, c)?;
        Ok(Self { target, weights })
    }
}

impl ScalarMap for CrossEntropyMap {
    fn value(&self, x: &Tensor) -> f64 {
        let (n, c) = (self.target.shape()[0], self.target.shape()[1]);
        evaluate(x, &self.target, &self.weights, n, c).loss
    }

    fn gradient(&self, x: &Tensor) -> Tensor {
        let (n, c) = (self.target.shape()[0], self.target.shape()[1]);
        evaluate(x, &self.target, &self.weights, n, c).grad
    }
}

fn check_pair(yhat: &Tensor, y: &Tensor) -> Result<(usize, usize)> {
    let &[n, c] = yhat.shape() else {
        return arg_err(format!("predictions must be [N,C], got {:?}", yhat.shape()));
    };
    if y.shape() != yhat.shape() {
        return arg_err(format!(
            "targets {:?} do not match predictions {:?}",
            y.shape(),
            yhat.shape()
        ));
    }
    if n == 0 || c == 0 {
        return arg_err("empty prediction tensor");
    }
    Ok((n, c))
}

fn resolve_weights(class_weights: Option<&[f64]>, c: usize) -> Result<Vec<f64>> {
    match class_weights {
        None => Ok(vec![1.0; c]),
        Some(w) if w.len() != c => arg_err(format!("{} class weights for {c} classes", w.len())),
        Some(w) if w.iter().any(|v| !v.is_finite() || *v < 0.0) => {
            arg_err("class weights must be finite and nonnegative")
        }
        Some(w) => Ok(w.to_vec()),
    }
}

fn evaluate(yhat: &Tensor, y: &Tensor, weights: &[f64], n: usize, c: usize) -> CrossEntropy {
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut clamped = false;
    let mut grad = vec![0.0; n * c];
    for (idx, (&p, &t)) in yhat.data().iter().zip(y.data()).enumerate() {
        if t == 0.0 {
            continue;
        }
        let wt = weights[idx % c] * t;
        let q = if p < LOG_CLAMP {
            clamped = true;
            LOG_CLAMP
        } else {
            p
        };
        loss -= wt * q.ln();
        grad[idx] = -inv_n * wt / q;
    }
    CrossEntropy {
        loss: loss * inv_n,
        grad: Tensor::new(vec![n, c], grad).expect("gradient shape matches predictions"),
        clamped,
    }
}

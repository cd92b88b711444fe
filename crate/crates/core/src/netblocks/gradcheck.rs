use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// A differentiable map from a tensor to a scalar.
pub trait ScalarMap {
    fn value(&self, x: &Tensor) -> f64;
    fn gradient(&self, x: &Tensor) -> Tensor;
}

/// Compares the analytic gradient of `f` at `x` with central differences of
/// step `eps` and returns `max_i |g_i - fd_i| / max(1, |g_i|)`.
pub fn finite_diff_check(f: &impl ScalarMap, x: &Tensor, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return arg_err(format!("finite-difference step {eps} must lie in (0, 1e-3]"));
    }
    let analytic = f.gradient(x);
    if analytic.shape() != x.shape() {
        return arg_err(format!(
            "gradient shape {:?} differs from input shape {:?}",
            analytic.shape(),
            x.shape()
        ));
    }
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.data().iter().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f.value(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f.value(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max((g - numeric).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(x) = Σ a_i x_i² + b_i x_i`.
    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl ScalarMap for Quadratic {
        fn value(&self, x: &Tensor) -> f64 {
            x.data()
                .iter()
                .zip(self.a.iter().zip(&self.b))
                .map(|(v, (a, b))| a * v * v + b * v)
                .sum()
        }

        fn gradient(&self, x: &Tensor) -> Tensor {
            let g = x
                .data()
                .iter()
                .zip(self.a.iter().zip(&self.b))
                .map(|(v, (a, b))| 2.0 * a * v + b)
                .collect();
            Tensor::new(x.shape().to_vec(), g).unwrap()
        }
    }

    struct Constant;

    impl ScalarMap for Constant {
        fn value(&self, _: &Tensor) -> f64 {
            4.2
        }

        fn gradient(&self, x: &Tensor) -> Tensor {
            Tensor::zeros(x.shape().to_vec())
        }
    }

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let f = Quadratic {
            a: vec![1.0, -2.5, 0.3, 7.0],
            b: vec![0.5, 0.0, -1.0, 2.0],
        };
        let x = Tensor::new(vec![2, 2], vec![0.3, -1.2, 2.0, 0.01]).unwrap();
        assert!(finite_diff_check(&f, &x, 1e-5).unwrap() <= 1e-7);
    }

    #[test]
    fn constant_map_has_zero_error() {
        let x = Tensor::from_fn(vec![3], |i| i as f64);
        assert_eq!(finite_diff_check(&Constant, &x, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn rejects_out_of_range_step() {
        let x = Tensor::zeros(vec![1]);
        assert!(finite_diff_check(&Constant, &x, 0.0).is_err());
        assert!(finite_diff_check(&Constant, &x, 1e-2).is_err());
    }
}

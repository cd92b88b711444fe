use crate::error::{arg_err, Result};
use crate::linalg::Matrix;
use crate::tensor::Tensor;

pub const DEFAULT_REDUCTION: usize = 16;

/// Weights of a squeeze-and-excitation block over `C` channels with
/// reduction ratio `r`: `w1` is `[C/r, C]`, `w2` is `[C, C/r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeParams {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
    reduction: usize,
}

impl SeParams {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>, reduction: usize) -> Result<Self> {
        let channels = w1.cols();
        if reduction == 0 || !channels.is_multiple_of(reduction) || channels == 0 {
            return arg_err(format!(
                "channel count {channels} must be a positive multiple of the reduction ratio {reduction}"
            ));
        }
        let hidden = channels / reduction;
        if w1.rows() != hidden || b1.len() != hidden {
            return arg_err(format!(
                "squeeze layer must be {hidden}x{channels} with {hidden} biases, got {}x{} and {}",
                w1.rows(),
                w1.cols(),
                b1.len()
            ));
        }
        if w2.rows() != channels || w2.cols() != hidden || b2.len() != channels {
            return arg_err(format!(
                "excitation layer must be {channels}x{hidden} with {channels} biases, got {}x{} and {}",
                w2.rows(),
                w2.cols(),
                b2.len()
            ));
        }
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            reduction,
        })
    }

    /// All-zero weights and biases; the gate is then exactly 0.5.
    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        let hidden = channels.checked_div(reduction).unwrap_or(0);
        Self::new(
            Matrix::zeros(hidden, channels),
            vec![0.0; hidden],
            Matrix::zeros(channels, hidden),
            vec![0.0; channels],
            reduction,
        )
    }

    pub fn channels(&self) -> usize {
        self.w1.cols()
    }

    /// Width of the bottleneck, `C / r`.
    pub fn bottleneck(&self) -> usize {
        self.w1.rows()
    }

    pub fn reduction(&self) -> usize {
        self.reduction
    }
}

/// Per-channel gate `sigmoid(W2 relu(W1 v + b1) + b2)` where `v` is the
/// global average of each channel of `x` (`[H,W,C]`).
pub fn se_gate(x: &Tensor, p: &SeParams) -> Result<Vec<f64>> {
    let (h, w, c) = x.hwc()?;
    if x.ndim() != 3 || c != p.channels() {
        return arg_err(format!(
            "SE block expects [H,W,{}] input, got {:?}",
            p.channels(),
            x.shape()
        ));
    }
    if h * w == 0 {
        return arg_err("SE block input has no pixels");
    }
    let mut pooled = vec![0.0; c];
    for px in x.data().chunks_exact(c) {
        for (acc, v) in pooled.iter_mut().zip(px) {
            *acc += v;
        }
    }
    let area = (h * w) as f64;
    pooled.iter_mut().for_each(|v| *v /= area);

    let hidden: Vec<f64> = p
        .w1
        .mul_vec(&pooled)
        .into_iter()
        .zip(&p.b1)
        .map(|(z, b)| (z + b).max(0.0))
        .collect();
    Ok(p
        .w2
        .mul_vec(&hidden)
        .into_iter()
        .zip(&p.b2)
        .map(|(z, b)| sigmoid(z + b))
        .collect())
}

/// Rescales every channel of `x` by its SE gate.
pub fn se_forward(x: &Tensor, p: &SeParams) -> Result<Tensor> {
    let gate = se_gate(x, p)?;
    let c = gate.len();
    let mut out = x.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (v, g) in px.iter_mut().zip(&gate) {
            *v *= g;
        }
    }
    Ok(out)
}

/// Logistic function, held strictly inside (0, 1) once it saturates.
fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_halve_the_input() {
        let p = SeParams::zeros(32, DEFAULT_REDUCTION).unwrap();
        assert_eq!(p.bottleneck(), 2);
        let x = Tensor::from_fn(vec![3, 2, 32], |i| i as f64 - 40.0);
        let y = se_forward(&x, &p).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_eq!(*b, 0.5 * a);
        }
    }

    #[test]
    fn hand_evaluated_gate_on_two_channels() {
        // 1x1x2 input, r = 2 so the bottleneck is a single unit.
        let x = Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
        let w1 = Matrix::from_vec(1, 2, vec![0.5, 0.25]).unwrap();
        let w2 = Matrix::from_vec(2, 1, vec![1.0, -2.0]).unwrap();
        let p = SeParams::new(w1, vec![-0.5], w2, vec![0.1, 0.2], 2).unwrap();
        // hidden = relu(0.5*1 + 0.25*3 - 0.5) = 0.75
        // gate = sigmoid(0.75 + 0.1), sigmoid(-1.5 + 0.2)
        let g0 = 1.0 / (1.0 + (-0.85f64).exp());
        let g1 = 1.0 / (1.0 + (1.3f64).exp());
        let gate = se_gate(&x, &p).unwrap();
        assert!((gate[0] - g0).abs() < 1e-15);
        assert!((gate[1] - g1).abs() < 1e-15);
        let y = se_forward(&x, &p).unwrap();
        assert!((y.data()[0] - g0).abs() < 1e-15);
        assert!((y.data()[1] - 3.0 * g1).abs() < 1e-15);
    }

    #[test]
    fn large_bias_approaches_identity() {
        let mut p = SeParams::zeros(4, 2).unwrap();
        p.b2 = vec![40.0; 4];
        let x = Tensor::from_fn(vec![2, 2, 4], |i| i as f64);
        let y = se_forward(&x, &p).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        assert!(se_gate(&x, &p).unwrap().iter().all(|&g| g < 1.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SeParams::zeros(30, 16).is_err());
        let p = SeParams::zeros(32, 16).unwrap();
        assert!(se_forward(&Tensor::zeros(vec![2, 2, 16]), &p).is_err());
        assert!(se_forward(&Tensor::zeros(vec![2, 32]), &p).is_err());
    }
}

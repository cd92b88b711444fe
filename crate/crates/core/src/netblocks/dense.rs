use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// One composite layer of a dense block: inference-mode batch norm, ReLU,
/// then a 3x3 convolution with zero padding 1 and no bias.
///
/// `kernel` has shape `[3, 3, in_channels, growth]` and is applied as a
/// cross-correlation. `bn_var` is used as stored; fold any stabilizing
/// epsilon into it before export.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams {
    bn_gamma: Vec<f64>,
    bn_beta: Vec<f64>,
    bn_mean: Vec<f64>,
    bn_var: Vec<f64>,
    kernel: Tensor,
}

impl DenseLayerParams {
    pub fn new(
        bn_gamma: Vec<f64>,
        bn_beta: Vec<f64>,
        bn_mean: Vec<f64>,
        bn_var: Vec<f64>,
        kernel: Tensor,
    ) -> Result<Self> {
        let &[kh, kw, cin, _] = kernel.shape() else {
            return arg_err(format!("conv kernel must be 4-D, got {:?}", kernel.shape()));
        };
        if (kh, kw) != (3, 3) {
            return arg_err(format!("conv kernel must be 3x3, got {kh}x{kw}"));
        }
        for (name, v) in [
            ("bn_gamma", &bn_gamma),
            ("bn_beta", &bn_beta),
            ("bn_mean", &bn_mean),
            ("bn_var", &bn_var),
        ] {
            if v.len() != cin {
                return arg_err(format!("{name} has {} entries, kernel expects {cin}", v.len()));
            }
        }
        if bn_var.iter().any(|&v| !(v > 0.0)) {
            return arg_err("bn_var must be strictly positive");
        }
        Ok(Self {
            bn_gamma,
            bn_beta,
            bn_mean,
            bn_var,
            kernel,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn growth(&self) -> usize {
        self.kernel.shape()[3]
    }
}

/// Applies one dense layer to `[H,W,C_in]`, producing `[H,W,growth]`.
pub fn dense_layer_forward(x: &Tensor, layer: &DenseLayerParams) -> Result<Tensor> {
    let (h, w, c) = x.hwc()?;
    if x.ndim() != 3 || c != layer.in_channels() {
        return arg_err(format!(
            "dense layer expects [H,W,{}] input, got {:?}",
            layer.in_channels(),
            x.shape()
        ));
    }
    let scale: Vec<f64> = layer
        .bn_gamma
        .iter()
        .zip(&layer.bn_var)
        .map(|(g, v)| g / v.sqrt())
        .collect();
    let activated: Vec<f64> = x
        .data()
        .chunks_exact(c.max(1))
        .flat_map(|px| {
            px.iter()
                .enumerate()
                .map(|(ch, &v)| ((v - layer.bn_mean[ch]) * scale[ch] + layer.bn_beta[ch]).max(0.0))
                .collect::<Vec<_>>()
        })
        .collect();

    let g = layer.growth();
    let k = layer.kernel.data();
    let mut out = vec![0.0; h * w * g];
    for y in 0..h {
        for xx in 0..w {
            let dst = &mut out[(y * w + xx) * g..(y * w + xx + 1) * g];
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = &activated[(sy as usize * w + sx as usize) * c..][..c];
                    for (ci, &a) in src.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let taps = &k[((ky * 3 + kx) * c + ci) * g..][..g];
                        for (o, t) in dst.iter_mut().zip(taps) {
                            *o += a * t;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, g], out)
}

/// Runs a dense block: layer `l` sees the channel concatenation of the
/// input and every earlier layer's output, and the block returns the full
/// concatenation `[x0, x1, ..., xL]`.
pub fn dense_block_forward(x0: &Tensor, layers: &[DenseLayerParams]) -> Result<Tensor> {
    let (h, w, c0) = x0.hwc()?;
    if x0.ndim() != 3 {
        return arg_err(format!("dense block expects [H,W,C] input, got {:?}", x0.shape()));
    }
    let mut features = x0.clone();
    let mut channels = c0;
    for (l, layer) in layers.iter().enumerate() {
        if layer.in_channels() != channels {
            return arg_err(format!(
                "layer {l} expects {} input channels but the block carries {channels}",
                layer.in_channels()
            ));
        }
        let fresh = dense_layer_forward(&features, layer)?;
        features = concat_channels(&features, &fresh, h, w)?;
        channels += layer.growth();
    }
    Ok(features)
}

fn concat_channels(a: &Tensor, b: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let ca = a.shape()[2];
    let cb = b.shape()[2];
    let mut data = Vec::with_capacity(h * w * (ca + cb));
    for p in 0..h * w {
        data.extend_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        data.extend_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    Tensor::new(vec![h, w, ca + cb], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(cin: usize, growth: usize, fill: f64) -> DenseLayerParams {
        DenseLayerParams::new(
            vec![1.0; cin],
            vec![0.0; cin],
            vec![0.0; cin],
            vec![1.0; cin],
            Tensor::filled(vec![3, 3, cin, growth], fill),
        )
        .unwrap()
    }

    #[test]
    fn empty_block_is_identity() {
        let x = Tensor::from_fn(vec![2, 3, 4], |i| i as f64);
        assert_eq!(dense_block_forward(&x, &[]).unwrap(), x);
    }

    #[test]
    fn channel_arithmetic() {
        let x = Tensor::filled(vec![2, 2, 4], 0.1);
        let layers = vec![layer(4, 12, 0.01), layer(16, 12, 0.01), layer(28, 12, 0.01)];
        let y = dense_block_forward(&x, &layers).unwrap();
        assert_eq!(y.shape(), &[2, 2, 40]);
        // the input passes through untouched
        assert_eq!(&y.data()[..4], &[0.1; 4]);
    }

    #[test]
    fn single_pixel_matches_scalar_chain() {
        // 1x1 input with two channels; only the kernel centre tap sees data.
        let x = Tensor::new(vec![1, 1, 2], vec![2.0, -1.0]).unwrap();
        let mut kernel = Tensor::filled(vec![3, 3, 2, 1], 100.0);
        let centre = (1 * 3 + 1) * 2;
        kernel.data_mut()[centre] = 0.5;
        kernel.data_mut()[centre + 1] = -3.0;
        let l = DenseLayerParams::new(
            vec![2.0, 1.0],
            vec![0.5, 0.25],
            vec![1.0, -2.0],
            vec![4.0, 0.25],
            kernel,
        )
        .unwrap();
        // BN: (2-1)/2*2+0.5 = 1.5 ; (-1+2)/0.5*1+0.25 = 2.25 ; both survive ReLU
        // conv: 1.5*0.5 + 2.25*(-3) = -6.0
        let y = dense_block_forward(&x, &[l]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3]);
        assert_eq!(y.data(), &[2.0, -1.0, -6.0]);
    }

    #[test]
    fn zero_padding_preserves_shape() {
        let x = Tensor::filled(vec![3, 3, 1], 1.0);
        let y = dense_layer_forward(&x, &layer(1, 1, 1.0)).unwrap();
        assert_eq!(y.shape(), &[3, 3, 1]);
        // corner sees 4 taps, edge 6, centre 9
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn rejects_mismatches() {
        let x = Tensor::zeros(vec![2, 2, 4]);
        assert!(dense_block_forward(&x, &[layer(5, 2, 0.0)]).is_err());
        assert!(DenseLayerParams::new(
            vec![1.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            Tensor::zeros(vec![3, 3, 1, 1])
        )
        .is_err());
        assert!(DenseLayerParams::new(
            vec![1.0],
            vec![0.0],
            vec![0.0],
            vec![1.0],
            Tensor::zeros(vec![1, 1, 1, 1])
        )
        .is_err());
    }
}

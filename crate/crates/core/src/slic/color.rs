use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

// D65 reference white
const XN: f64 = 0.950_47;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_83;

/// Converts a `[h,w,3]` sRGB image in `[0,1]` to CIELAB (D65).
pub fn rgb_to_lab(img: &Tensor) -> Result<Tensor> {
    let (_, _, c) = img.hwc()?;
    if img.ndim() != 3 || c != 3 {
        return arg_err(format!("expected a [h,w,3] image, got {:?}", img.shape()));
    }
    let mut out = Vec::with_capacity(img.len());
    for px in img.data().chunks_exact(3) {
        out.extend_from_slice(&srgb_to_lab([px[0], px[1], px[2]]));
    }
    Tensor::new(img.shape().to_vec(), out)
}

pub(crate) fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|v| linearize(v.clamp(0.0, 1.0)));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (lab_f(x / XN), lab_f(y / YN), lab_f(z / ZN));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn linearize(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_black_gray() {
        let [l, a, b] = srgb_to_lab([1.0, 1.0, 1.0]);
        assert!((l - 100.0).abs() < 1e-4, "{l}");
        assert!(a.abs() <= 0.01 && b.abs() <= 0.01);

        let [l, a, b] = srgb_to_lab([0.0, 0.0, 0.0]);
        assert!(l.abs() < 1e-12 && a.abs() < 1e-12 && b.abs() < 1e-12);

        // Independent evaluation: Y = ((0.5 + 0.055) / 1.055)^2.4 = 0.2140...,
        // L = 116 * cbrt(Y) - 16 = 53.389
        let [l, a, b] = srgb_to_lab([0.5, 0.5, 0.5]);
        assert!((l - 53.39).abs() < 0.01, "{l}");
        assert!(a.abs() <= 0.01 && b.abs() <= 0.01);
    }

    #[test]
    fn tensor_wrapper_checks_channels() {
        assert!(rgb_to_lab(&Tensor::zeros(vec![2, 2, 1])).is_err());
        let lab = rgb_to_lab(&Tensor::filled(vec![2, 1, 3], 1.0)).unwrap();
        assert_eq!(lab.shape(), &[2, 1, 3]);
    }
}

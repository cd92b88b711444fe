//! Dense row-major tensors and bilinear resampling.

use crate::error::{arg_err, Result};

/// Dense n-dimensional array of `f64` in row-major (C) order.
///
/// Images are stored as `[height, width, channels]`, single-channel maps as
/// `[height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly and holds
    /// only finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return arg_err(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return arg_err(format!("non-finite value at flat index {pos}"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    /// Zero-dimensional tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor from a function of the flat index.
    pub fn from_fn(shape: Vec<usize>, f: impl FnMut(usize) -> f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: (0..len).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// `(height, width, channels)` of a rank-2 or rank-3 tensor; rank-2
    /// tensors report one channel.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] => Ok((h, w, 1)),
            &[h, w, c] => Ok((h, w, c)),
            other => arg_err(format!("expected a [h,w] or [h,w,c] tensor, got shape {other:?}")),
        }
    }

    /// Element at `(y, x, c)` of a rank-3 tensor (or `(y, x)` with `c = 0`
    /// for rank 2). Panics on out-of-range indices.
    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        let (w, ch) = match *self.shape.as_slice() {
            [_, w] => (w, 1),
            [_, w, c] => (w, c),
            _ => panic!("at() needs a rank-2 or rank-3 tensor"),
        };
        self.data[(y * w + x) * ch + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Extracts one channel of a `[h,w,c]` tensor as `[h,w]`.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let (h, w, ch) = self.hwc()?;
        if c >= ch {
            return arg_err(format!("channel {c} out of range for {ch} channels"));
        }
        let data = self.data.iter().skip(c).step_by(ch).copied().collect();
        Ok(Self {
            shape: vec![h, w],
            data,
        })
    }

    /// Minimum and maximum element, `None` for an empty tensor.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.data.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

/// Bilinear resize of a `[h,w,c]` (or `[h,w]`) tensor with the
/// align-corners-false convention: output pixel centers map back to
/// `(o + 0.5) * in / out - 0.5`, clamped to the input grid.
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = t.hwc()?;
    if out_h == 0 || out_w == 0 {
        return arg_err(format!("target size {out_h}x{out_w} has a zero dimension"));
    }
    if h == 0 || w == 0 {
        return arg_err("cannot resize an empty tensor");
    }
    let out_shape = if t.ndim() == 2 {
        vec![out_h, out_w]
    } else {
        vec![out_h, out_w, c]
    };
    if out_h == h && out_w == w {
        return Tensor::new(out_shape, t.data().to_vec());
    }

    let ys = sample_positions(h, out_h);
    let xs = sample_positions(w, out_w);
    let src = t.data();
    let mut data = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let (a, b, cc, d) = (p(y0, x0), p(y0, x1), p(y1, x0), p(y1, x1));
                let top = a + (b - a) * fx;
                let bottom = cc + (d - cc) * fx;
                let v = top + (bottom - top) * fy;
                // rounding must not leave the corner hull
                let lo = a.min(b).min(cc).min(d);
                let hi = a.max(b).max(cc).max(d);
                data.push(v.clamp(lo, hi));
            }
        }
    }
    Tensor::new(out_shape, data)
}

/// Source indices and interpolation weight for every output coordinate.
fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

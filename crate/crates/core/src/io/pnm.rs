//! Binary PGM (P5) and PPM (P6) codec with 8- or 16-bit samples.

use crate::error::{arg_err, Error, Result};
use crate::tensor::Tensor;

/// Decoded netpbm raster. Samples are interleaved per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    maxval: u16,
    samples: Vec<u16>,
}

impl ImageBuffer {
    /// `maxval` must be 255 or 65535 and `channels` 1 or 3.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        maxval: u16,
        samples: Vec<u16>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return arg_err(format!("images have 1 or 3 channels, got {channels}"));
        }
        if maxval != 255 && maxval != 65535 {
            return arg_err(format!("maxval must be 255 or 65535, got {maxval}"));
        }
        if samples.len() != height * width * channels {
            return arg_err(format!(
                "{}x{}x{} image needs {} samples, got {}",
                height,
                width,
                channels,
                height * width * channels,
                samples.len()
            ));
        }
        if let Some(s) = samples.iter().find(|&&s| s > maxval) {
            return arg_err(format!("sample {s} exceeds maxval {maxval}"));
        }
        Ok(Self {
            height,
            width,
            channels,
            maxval,
            samples,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    /// Converts to a `[h,w,c]` tensor with samples scaled to `[0,1]`.
    pub fn to_tensor(&self) -> Tensor {
        let scale = self.maxval as f64;
        Tensor::new(
            vec![self.height, self.width, self.channels],
            self.samples.iter().map(|&s| s as f64 / scale).collect(),
        )
        .expect("sample count checked at construction")
    }

    /// Quantizes a `[h,w]` or `[h,w,c]` tensor with values in `[0,1]`
    /// (clamped) to the given maxval.
    pub fn from_unit_tensor(t: &Tensor, maxval: u16) -> Result<Self> {
        let (h, w, c) = t.hwc()?;
        let scale = maxval as f64;
        let samples = t
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * scale).round() as u16)
            .collect();
        Self::new(h, w, c, maxval, samples)
    }

    /// Stores integer labels verbatim as a 16-bit PGM.
    pub fn from_labels(height: usize, width: usize, labels: &[u16]) -> Result<Self> {
        Self::new(height, width, 1, 65535, labels.to_vec())
    }
}

/// Decodes a binary PGM or PPM.
pub fn read_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        b"P1" | b"P2" | b"P3" | b"P4" | b"P7" => {
            return Err(Error::Unsupported(format!(
                "netpbm variant {}",
                String::from_utf8_lossy(&magic)
            )))
        }
        _ => return Err(Error::Format("not a netpbm file".into())),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Unsupported(format!("maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }

    let count = width * height * channels;
    let raster = &bytes[cursor.pos..];
    let samples: Vec<u16> = if maxval == 255 {
        if raster.len() != count {
            return Err(Error::Format(format!(
                "raster has {} bytes, expected {count}",
                raster.len()
            )));
        }
        raster.iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() != count * 2 {
            return Err(Error::Format(format!(
                "raster has {} bytes, expected {}",
                raster.len(),
                count * 2
            )));
        }
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    ImageBuffer::new(height, width, channels, maxval as u16, samples)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Encodes as P5 (one channel) or P6 (three channels).
pub fn write_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval == 255 {
        out.extend(img.samples.iter().map(|&s| s as u8));
    } else {
        for s in &img.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::Format(format!(
                    "bad header field '{}'",
                    String::from_utf8_lossy(&tok)
                ))
            })
    }
}

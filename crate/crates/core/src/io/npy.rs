//! NPY v1.0 reader and writer for float tensors.
//!
//! Only the subset needed for feature-map interchange is supported:
//! little-endian `f4`/`f8` payloads in C order. Everything is read into `f64`.
//! Files are always written as `<f8`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
/// Magic, two version bytes and the little-endian u16 header length.
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

/// Parses an NPY v1.0 container into a tensor.
pub fn read_npy(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic string".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Unsupported(format!("NPY version {major}.{minor}")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(Error::Format("truncated NPY header".into()));
    }
    let header_text = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| Error::Format("NPY header is not valid text".into()))?;
    let header = parse_header(header_text)?;

    let count: usize = header.shape.iter().product();
    let payload = &bytes[data_start..];
    if payload.len() != count * header.dtype.size() {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape {:?} needs {}",
            payload.len(),
            header.shape,
            count * header.dtype.size()
        )));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("payload contains NaN or infinite values".into()));
    }
    Tensor::new(header.shape, data)
}

/// Serializes a tensor as NPY v1.0, `<f8`, C order.
pub fn write_npy(t: &Tensor) -> Vec<u8> {
    let shape = match t.shape() {
        [] => "()".to_string(),
        [d] => format!("({d},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape}, }}");
    // pad with spaces so the payload starts on a 64-byte boundary; the header
    // always ends in a newline
    let unpadded = PREAMBLE_LEN + header.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', padding));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + t.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses the Python dict literal of an NPY header. Keys may come in any
/// order; unknown keys are rejected.
fn parse_header(text: &str) -> Result<Header> {
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::Format("NPY header is not a dict literal".into()))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest)?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| Error::Format(format!("missing ':' after key '{key}'")))?
            .trim_start();
        let remainder = match key {
            "descr" => {
                let (value, r) = take_quoted(after)?;
                descr = Some(value.to_string());
                r
            }
            "fortran_order" => {
                if let Some(r) = after.strip_prefix("False") {
                    fortran = Some(false);
                    r
                } else if let Some(r) = after.strip_prefix("True") {
                    fortran = Some(true);
                    r
                } else {
                    return Err(Error::Format("fortran_order must be True or False".into()));
                }
            }
            "shape" => {
                let close = after
                    .find(')')
                    .ok_or_else(|| Error::Format("unterminated shape tuple".into()))?;
                let tuple = after
                    .strip_prefix('(')
                    .ok_or_else(|| Error::Format("shape must be a tuple".into()))?;
                shape = Some(parse_shape(&tuple[..close - 1])?);
                &after[close + 1..]
            }
            other => return Err(Error::Format(format!("unexpected header key '{other}'"))),
        };
        rest = remainder.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }

    let descr = descr.ok_or_else(|| Error::Format("header lacks 'descr'".into()))?;
    let fortran = fortran.ok_or_else(|| Error::Format("header lacks 'fortran_order'".into()))?;
    let shape = shape.ok_or_else(|| Error::Format("header lacks 'shape'".into()))?;
    if fortran {
        return Err(Error::Unsupported("Fortran-order arrays".into()));
    }
    let dtype = match descr.as_str() {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        other => return Err(Error::Unsupported(format!("dtype '{other}'"))),
    };
    Ok(Header { dtype, shape })
}

fn take_quoted(s: &str) -> Result<(&str, &str)> {
    let quote = s
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Format(format!("expected a quoted string at '{s}'")))?;
    let inner = &s[1..];
    let end = inner
        .find(quote)
        .ok_or_else(|| Error::Format("unterminated string in header".into()))?;
    Ok((&inner[..end], &inner[end + 1..]))
}

fn parse_shape(inner: &str) -> Result<Vec<usize>> {
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.strip_suffix('L')
                .unwrap_or(s)
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry '{s}'")))
        })
        .collect()
}

//! IDX binary arrays (the MNIST distribution format).
//!
//! Layout: a big-endian magic `0x0000_08_0d` (unsigned bytes, `d` dimensions),
//! `d` big-endian `u32` sizes, then the raw payload. Only `d = 1` (labels)
//! and `d = 3` (images) are accepted.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Pixel values as `f64` in `[0, 255]`, shaped like the file.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.dims.clone(), self.data.iter().map(|&b| f64::from(b)).collect())
            .expect("dims validated at parse time")
    }

    /// Splits a `(count, rows, cols)` array into one `[rows, cols]` tensor per item.
    pub fn images(&self) -> Result<Vec<Tensor>> {
        let [_, rows, cols] = self.dims[..] else {
            return Err(Error::invalid(format!("expected 3 dims, found {:?}", self.dims)));
        };
        let item = rows * cols;
        Ok(self
            .data
            .chunks_exact(item.max(1))
            .map(|c| {
                Tensor::new(vec![rows, cols], c.iter().map(|&b| f64::from(b)).collect())
                    .expect("chunk matches dims")
            })
            .collect())
    }
}

pub fn load_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, &path.display().to_string())
}

pub fn parse_idx(bytes: &[u8], context: &str) -> Result<IdxArray> {
    let read_u32 = |offset: usize| -> Result<u32> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::format(context, bytes.len() as u64, "truncated header"))
    };
    let magic = read_u32(0)?;
    let ndims = match magic {
        IDX_LABELS_MAGIC => 1,
        IDX_IMAGES_MAGIC => 3,
        other => {
            return Err(Error::format(
                context,
                0,
                format!("bad magic 0x{other:08x}, expected 0x{IDX_LABELS_MAGIC:08x} or 0x{IDX_IMAGES_MAGIC:08x}"),
            ))
        }
    };
    let mut dims = Vec::with_capacity(ndims);
    let mut len = 1usize;
    for d in 0..ndims {
        let offset = 4 + 4 * d;
        let size = read_u32(offset)? as usize;
        len = len
            .checked_mul(size)
            .ok_or_else(|| Error::format(context, offset as u64, "dimension product overflows"))?;
        dims.push(size);
    }
    let header = 4 + 4 * ndims;
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(Error::format(
            context,
            bytes.len() as u64,
            format!("truncated payload: expected {len} bytes after header, found {}", payload.len()),
        ));
    }
    if payload.len() > len {
        return Err(Error::format(
            context,
            (header + len) as u64,
            format!("{} trailing bytes after payload", payload.len() - len),
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let magic = match array.dims.len() {
        1 => IDX_LABELS_MAGIC,
        3 => IDX_IMAGES_MAGIC,
        n => return Err(Error::invalid(format!("IDX writer supports 1 or 3 dims, got {n}"))),
    };
    if array.dims.iter().product::<usize>() != array.data.len() {
        return Err(Error::invalid("IDX payload length does not match dims"));
    }
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("IDX dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

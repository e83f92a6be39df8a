//! Reader and writer for the IDX container used by MNIST, KMNIST and
//! Fashion-MNIST.
//!
//! ```text
//! bytes 0-1   0x00 0x00   reserved
//! byte  2     0x08        element type (unsigned byte)
//! byte  3     d           number of dimensions
//! 4*d bytes               big-endian u32 dimension sizes
//! payload                 product(dims) bytes, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Magic number of a rank-3 unsigned-byte tensor (an image stack).
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number of a rank-1 unsigned-byte tensor (a label vector).
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const UBYTE_TYPE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Number of items along the leading dimension.
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Product of all dimensions after the first.
    pub fn item_size(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    /// Bytes mapped onto `[0, 1]` as `v / 255`.
    pub fn to_unit_interval(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v) / 255.0).collect()
    }

    pub fn magic(&self) -> u32 {
        (u32::from(UBYTE_TYPE) << 8) | self.dims.len() as u32
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::IdxTruncated {
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != UBYTE_TYPE || bytes[3] == 0 {
        return Err(Error::IdxMagic(magic));
    }
    let rank = usize::from(bytes[3]);
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(Error::IdxTruncated {
            expected: header_len,
            found: bytes.len(),
        });
    }

    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload_len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::IdxDimensionOverflow)?;
    let expected = header_len
        .checked_add(payload_len)
        .ok_or(Error::IdxDimensionOverflow)?;

    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::IdxTrailing(bytes.len() - expected));
    }

    Ok(IdxTensor {
        dims,
        data: bytes[header_len..].to_vec(),
    })
}

pub fn encode_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&tensor.magic().to_be_bytes());
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

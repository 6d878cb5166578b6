//! Little-endian binary tensors: the magic `ATNS`, a dtype code (the element
//! width in bytes), the rank, `rank` dimensions as u64, then the row-major
//! payload.

use std::fs;
use std::path::Path;

use super::cpu::Element;
use crate::param_space::DType;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ATNS";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub dims: Vec<u64>,
    pub data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(dims: Vec<u64>, data: Vec<T>) -> Result<Self> {
        let want: u64 = dims.iter().product();
        if want != data.len() as u64 {
            return Err(Error::DimensionMismatch(format!(
                "dims {dims:?} describe {want} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let width = T::DTYPE.size_bytes() as usize;
        let mut out = Vec::with_capacity(6 + 8 * self.dims.len() + width * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(T::DTYPE.size_bytes() as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err("missing tensor magic".into());
        }
        let dtype = DType::from_size(u32::from(bytes[4])).ok_or("unknown dtype code")?;
        if dtype != T::DTYPE {
            return Err(format!("holds {}, expected {}", dtype.name(), T::DTYPE.name()));
        }
        let rank = bytes[5] as usize;
        let header = 6 + 8 * rank;
        if bytes.len() < header {
            return Err("truncated header".into());
        }
        let dims: Vec<u64> =
            bytes[6..header].chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let count = dims.iter().try_fold(1u64, |acc, d| acc.checked_mul(*d)).ok_or("element count overflows")?;
        let width = dtype.size_bytes() as usize;
        let payload = &bytes[header..];
        if payload.len() as u64 != count.saturating_mul(width as u64) {
            return Err(format!("payload has {} bytes, expected {} elements", payload.len(), count));
        }
        let data = payload.chunks_exact(width).map(T::read_le).collect();
        Ok(Tensor { dims, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::parse(path, reason))
    }
}

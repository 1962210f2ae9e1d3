use std::path::{Path, PathBuf};

use crate::error::{Result, VhdError};

pub(crate) struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Reader { path, bytes, pos: 0 }
    }

    fn path(&self) -> PathBuf {
        self.path.to_path_buf()
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: u64) -> Result<&'a [u8]> {
        let available = self.remaining() as u64;
        if n > available {
            return Err(VhdError::Truncated {
                path: self.path(),
                needed: n,
                available,
            });
        }
        let n = n as usize;
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn header(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let b = self.take(4)?;
        let found = [b[0], b[1], b[2], b[3]];
        if found != magic {
            return Err(VhdError::BadMagic {
                path: self.path(),
                found,
                expected: magic,
            });
        }
        let v = self.u32()?;
        if v != version {
            return Err(VhdError::BadVersion {
                path: self.path(),
                found: v,
            });
        }
        Ok(())
    }

    /// `count` little-endian f32 values; `dims` is reported on overflow.
    pub fn f32s(&mut self, dims: &[u64]) -> Result<Vec<f32>> {
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(4).map(|_| c))
            .filter(|&c| usize::try_from(c).is_ok())
            .ok_or_else(|| VhdError::DimensionOverflow {
                path: self.path(),
                dims: dims.to_vec(),
            })?;
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            extra => Err(VhdError::TrailingBytes {
                path: self.path(),
                extra: extra as u64,
            }),
        }
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn len_u32(what: &str, n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| VhdError::Config(format!("{what} {n} does not fit in 32 bits")))
}

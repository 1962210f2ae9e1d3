//! On-disk formats. Binary files are little-endian with a four-byte magic
//! and a `u32` version; text files are UTF-8.

mod binary;
pub mod checkpoint;
pub mod features;
pub mod manifest;
pub mod tables;

use std::fs;
use std::path::Path;

use crate::error::{Result, VhdError};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| VhdError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| VhdError::io(path, e))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| VhdError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| VhdError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| VhdError::io(path, e))
}

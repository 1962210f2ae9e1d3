//! Per-video feature matrices: `"VHDF"`, version, segment count, dim, then
//! row-major f32 values.

use std::path::Path;

use vhd_core::data::VideoFeatures;

use super::binary::{len_u32, put_f32s, put_u32, Reader};
use super::{read_bytes, write_atomic};
use crate::error::Result;

pub const MAGIC: [u8; 4] = *b"VHDF";
pub const VERSION: u32 = 1;

/// Raw contents of a feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub num_segments: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

pub fn encode_features(vf: &VideoFeatures) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + vf.features().len() * 4);
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, len_u32("segment count", vf.num_segments())?);
    put_u32(&mut out, len_u32("feature dim", vf.dim())?);
    put_f32s(&mut out, vf.features());
    Ok(out)
}

pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = Reader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let n = r.u32()?;
    let d = r.u32()?;
    let values = r.f32s(&[n as u64, d as u64])?;
    r.finish()?;
    Ok(FeatureMatrix {
        num_segments: n as usize,
        dim: d as usize,
        values,
    })
}

pub fn write_feature_file(vf: &VideoFeatures, path: &Path) -> Result<()> {
    write_atomic(path, &encode_features(vf)?)
}

/// Loads a feature file as an unlabeled video.
pub fn load_feature_file(path: &Path, video_id: &str, category: &str) -> Result<VideoFeatures> {
    let m = decode_features(path, &read_bytes(path)?)?;
    Ok(VideoFeatures::new(video_id, category, m.dim, m.values, None)?)
}

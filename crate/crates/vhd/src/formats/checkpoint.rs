//! Named parameter tensors: `"SHLC"`, version, tensor count, then per
//! tensor a `u32`-length-prefixed UTF-8 name, rank, dims and f32 values.

use std::path::Path;

use vhd_core::model::{ModelConfig, ModelParams};
use vhd_core::{Real, Tensor};

use super::binary::{len_u32, put_f32s, put_u32, Reader};
use super::{read_bytes, write_atomic};
use crate::error::{Result, VhdError};

pub const MAGIC: [u8; 4] = *b"SHLC";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint<T: Real>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + params.num_scalars() * 4);
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, len_u32("tensor count", params.tensors().len())?);
    for (name, t) in params.named() {
        put_u32(&mut out, len_u32("name length", name.len())?);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, len_u32("rank", t.rank())?);
        for &d in t.shape() {
            put_u32(&mut out, len_u32("dimension", d)?);
        }
        let values: Vec<f32> = t.data().iter().map(|v| v.as_f64() as f32).collect();
        put_f32s(&mut out, &values);
    }
    Ok(out)
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let count = r.u32()?;
    let mut out = Vec::new();
    for i in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len as u64)?)
            .map_err(|_| VhdError::parse(path, i as usize, "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()?;
        let dims: Vec<u64> = (0..rank).map(|_| r.u32().map(u64::from)).collect::<Result<_>>()?;
        let values = r.f32s(&dims)?;
        let shape: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
        let t = Tensor::new(&shape, values).map_err(VhdError::from)?;
        out.push((name, t));
    }
    r.finish()?;
    Ok(out)
}

/// Parameters are stored at 32-bit precision whatever `T` is.
pub fn save_checkpoint<T: Real>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params)?)
}

/// Loads parameters and checks them against `config`. Heads are recovered
/// from the tensor names; a checkpoint without `encoder.` tensors loads as
/// an encoder-free model.
pub fn load_checkpoint<T: Real>(path: &Path, config: &ModelConfig) -> Result<ModelParams<T>> {
    let named = decode_checkpoint(path, &read_bytes(path)?)?;
    let mut config = config.clone();
    config.use_encoder = named.iter().any(|(n, _)| n.starts_with("encoder."));
    let named = named.into_iter().map(|(n, t)| (n, t.cast())).collect();
    Ok(ModelParams::from_named(&config, named)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vhd_core::model::HeadRole;

    fn model(dim: usize) -> ModelParams<f32> {
        let mut cfg = ModelConfig::desk(dim);
        cfg.encoder.num_layers = 1;
        cfg.head_hidden = [8, 4];
        ModelParams::init(&cfg, &[HeadRole::Coarse, HeadRole::Fine], 1).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = model(8);
        let bytes = encode_checkpoint(&p).unwrap();
        let back = decode_checkpoint(Path::new("m"), &bytes).unwrap();
        assert_eq!(back.len(), p.tensors().len());
        for ((n, t), (n2, t2)) in back.iter().zip(p.named()) {
            assert_eq!(n, n2);
            assert_eq!(t.shape(), t2.shape());
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        let q = ModelParams::from_named(p.config(), back).unwrap();
        assert_eq!(q.roles(), p.roles());
    }

    #[test]
    fn truncation_and_header_errors() {
        let bytes = encode_checkpoint(&model(8)).unwrap();
        let p = Path::new("m");
        for cut in [0, 3, 11, 40, bytes.len() - 1] {
            assert!(
                matches!(
                    decode_checkpoint(p, &bytes[..cut]),
                    Err(VhdError::Truncated { .. })
                ),
                "cut at {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_checkpoint(p, &bad),
            Err(VhdError::BadMagic { .. })
        ));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(
            decode_checkpoint(p, &bad),
            Err(VhdError::BadVersion { .. })
        ));
    }

    #[test]
    fn wrong_config_is_a_shape_error() {
        let named = decode_checkpoint(Path::new("m"), &encode_checkpoint(&model(8)).unwrap()).unwrap();
        let mut cfg16 = ModelConfig::desk(16);
        cfg16.encoder.num_layers = 1;
        cfg16.head_hidden = [8, 4];
        let r = ModelParams::from_named(&cfg16, named);
        assert!(matches!(r, Err(vhd_core::Error::Dimension { .. })), "{r:?}");
    }
}

//! Binary model checkpoints.
//!
//! Layout: magic `GCGP`, little-endian `u32` format version, `u32` header
//! length, a JSON header with the shape hyperparameters and feature
//! normalization, then every learnable tensor followed by every batch-norm
//! buffer as little-endian `f32` in declaration order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::NormStats;
use super::params::{Hyper, ModelParams};
use super::{GnnError, Model};

pub const MAGIC: &[u8; 4] = b"GCGP";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    hyper: Hyper,
    norm: NormStats,
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        hyper: model.params.hyper,
        norm: model.norm.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.params.learnable().into_iter().chain(model.params.buffers()) {
        for &v in t.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn corrupt(msg: impl Into<String>) -> GnnError {
    GnnError::CorruptCheckpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model, GnnError> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(GnnError::VersionMismatch { found: version, expected: VERSION });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body_start = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[12..body_start]).map_err(|e| corrupt(format!("header: {e}")))?;
    let mut params = ModelParams::init(header.hyper, &mut ChaCha8Rng::seed_from_u64(0));
    let expected: usize = params.learnable().iter().chain(params.buffers().iter()).map(|t| t.len()).sum();
    let body = &bytes[body_start..];
    if body.len() != 4 * expected {
        return Err(corrupt(format!("expected {} tensor bytes, found {}", 4 * expected, body.len())));
    }
    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for t in params.learnable_mut() {
        t.iter_mut().for_each(|v| *v = values.next().unwrap());
    }
    for t in params.buffers_mut() {
        t.iter_mut().for_each(|v| *v = values.next().unwrap());
    }
    if !params.is_finite() {
        return Err(corrupt("non-finite tensor value"));
    }
    Ok(Model { params, norm: header.norm })
}

pub fn save(model: &Model, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_bytes(model))
}

pub fn load(path: &Path) -> anyhow::Result<Model> {
    let bytes = std::fs::read(path)?;
    Ok(from_bytes(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::features::{featurize, NormStats};
    use crate::instgen::{generate, GenConfig};

    fn model() -> Model {
        let g = generate(&GenConfig::with_seed(3)).unwrap();
        let f = featurize(&g);
        let norm = NormStats::fit([&f]).unwrap();
        let hyper = Hyper { node_dim: f.x_init.ncols(), edge_dim: f.e_init.ncols(), h_conv: 8, h_mlp: 8, l_conv: 2, l_mlp: 2 };
        Model { params: ModelParams::init(hyper, &mut ChaCha8Rng::seed_from_u64(11)), norm }
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let m = model();
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back.params, m.params.rounded_f32());
        assert_eq!(back.norm, m.norm);
        assert_eq!(to_bytes(&back), to_bytes(&m));
    }

    #[test]
    fn rejects_bad_input() {
        let bytes = to_bytes(&model());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(GnnError::CorruptCheckpoint(_))));
        let mut v2 = bytes.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(from_bytes(&v2), Err(GnnError::VersionMismatch { found: 2, .. })));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 4]), Err(GnnError::CorruptCheckpoint(_))));
        assert!(matches!(from_bytes(&bytes[..6]), Err(GnnError::CorruptCheckpoint(_))));
    }
}

//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"ASDC"            4 bytes
//! version u32               currently 1
//! meta_len u32, meta        UTF-8 key=value block (model config + extras)
//! count u32                 number of arrays
//! per array:
//!   name_len u32, name      UTF-8
//!   ndim u32, dims u32 * ndim
//!   data f32 * prod(dims)   little-endian IEEE 754
//! ```
//!
//! Values are stored as 32-bit floats; loading therefore reproduces a saved
//! model exactly once values are f32-representable (save -> load -> save is
//! a fixed point).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;
use thiserror::Error;

use crate::config::{parse_kv, render_kv, ConfigError, ModelConfig};
use crate::nn::ParamStore;

const MAGIC: &[u8; 4] = b"ASDC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("checkpoint meta: {0}")]
    Meta(#[from] ConfigError),
    #[error("checkpoint parameter '{name}': {reason}")]
    Param { name: String, reason: String },
}

/// Everything needed to rebuild and run a model: architecture config plus
/// the preprocessing crop size it was trained with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub input_size: usize,
}

impl CheckpointMeta {
    fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = self.model.to_kv();
        kv.insert("input_size".into(), self.input_size.to_string());
        kv
    }

    fn from_kv(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let model = ModelConfig::from_kv(map)?;
        let input_size = match map.get("input_size") {
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: "input_size".into(),
                value: v.clone(),
                expected: "integer",
            })?,
            None => 112,
        };
        Ok(CheckpointMeta { model, input_size })
    }
}

/// Serialize every store entry (parameters and running statistics).
pub fn save(path: &Path, meta: &CheckpointMeta, ps: &ParamStore) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    let meta_text = render_kv(&meta.to_kv());
    bytes.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
    bytes.extend_from_slice(meta_text.as_bytes());
    bytes.extend_from_slice(&(ps.len() as u32).to_le_bytes());
    for id in (0..ps.len()).map(crate::nn::ParamId) {
        let name = ps.name(id);
        let value = ps.value(id);
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name.as_bytes());
        bytes.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
        for d in value.shape() {
            bytes.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in value.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(&bytes).map_err(io)
}

/// Read a checkpoint and fill `ps`. Every array in the file must match an
/// existing store entry in name and shape, and every store entry must be
/// present in the file.
pub fn load_into(path: &Path, ps: &mut ParamStore) -> Result<CheckpointMeta, CheckpointError> {
    let (meta, arrays) = read_raw(path)?;
    let mut seen = 0usize;
    for (name, value) in arrays {
        let id = ps.id_of(&name).ok_or_else(|| CheckpointError::Param {
            name: name.clone(),
            reason: "not present in the model being loaded".into(),
        })?;
        if ps.value(id).shape() != value.shape() {
            return Err(CheckpointError::Param {
                name,
                reason: format!(
                    "shape {:?} in file, {:?} in model",
                    value.shape(),
                    ps.value(id).shape()
                ),
            });
        }
        ps.value_mut(id).assign(&value);
        seen += 1;
    }
    if seen != ps.len() {
        return Err(CheckpointError::Param {
            name: "<store>".into(),
            reason: format!("file has {seen} arrays, model expects {}", ps.len()),
        });
    }
    Ok(meta)
}

/// Read just the meta block (to rebuild the model before loading values).
pub fn read_meta(path: &Path) -> Result<CheckpointMeta, CheckpointError> {
    Ok(read_raw(path)?.0)
}

#[allow(clippy::type_complexity)]
fn read_raw(path: &Path) -> Result<(CheckpointMeta, Vec<(String, ArrayD<f64>)>), CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *pos + n > bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let read_u32 = |pos: &mut usize| -> Result<u32, CheckpointError> {
        let s = take(pos, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };
    let version = read_u32(&mut pos)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = read_u32(&mut pos)? as usize;
    let meta_text = std::str::from_utf8(take(&mut pos, meta_len)?)
        .map_err(|_| CheckpointError::Truncated)?
        .to_string();
    let meta = CheckpointMeta::from_kv(&parse_kv(&meta_text)?)?;
    let count = read_u32(&mut pos)? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut pos)? as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| CheckpointError::Truncated)?
            .to_string();
        let ndim = read_u32(&mut pos)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u32(&mut pos)? as usize);
        }
        let len: usize = dims.iter().product();
        let data = take(&mut pos, len * 4)?;
        let values: Vec<f64> = data
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let arr = ArrayD::from_shape_vec(dims, values).map_err(|e| CheckpointError::Param {
            name: name.clone(),
            reason: e.to_string(),
        })?;
        arrays.push((name, arr));
    }
    Ok((meta, arrays))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::AsdModel;

    #[test]
    fn roundtrip_reproduces_values_exactly_after_quantization() {
        let config = ModelConfig::miniature();
        let (_, ps) = AsdModel::new(&config, 77).unwrap();
        let meta = CheckpointMeta {
            model: config.clone(),
            input_size: 16,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &meta, &ps).unwrap();

        let (_, mut ps2) = AsdModel::new(&config, 0).unwrap();
        let meta2 = load_into(&path, &mut ps2).unwrap();
        assert_eq!(meta, meta2);

        // Save again: the second file is byte-identical (f32 fixed point).
        let path2 = dir.path().join("m2.ckpt");
        save(&path2, &meta2, &ps2).unwrap();
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(&path2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_is_detected() {
        let config = ModelConfig::miniature();
        let (_, ps) = AsdModel::new(&config, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(
            &path,
            &CheckpointMeta {
                model: config,
                input_size: 16,
            },
            &ps,
        )
        .unwrap();
        let other = ModelConfig {
            widths: [8, 8, 8, 8],
            ..ModelConfig::miniature()
        };
        let (_, mut ps2) = AsdModel::new(&other, 1).unwrap();
        assert!(load_into(&path, &mut ps2).is_err());
    }
}

//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "SGQECKPT"
//! version  u32 LE
//! config   u64 LE length + JSON-encoded ModelConfig
//! count    u32 LE number of tensors
//! tensor*  u32 LE name length, name bytes, u32 LE rank, rank × u64 LE dims,
//!          product(dims) × f64 LE values
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::params::Params;
use super::{ModelConfig, TransformerModel};

const MAGIC: &[u8; 8] = b"SGQECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic header)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint config mismatch: {0}")]
    Config(String),
}

pub fn save_checkpoint(model: &TransformerModel, path: &Path) -> Result<(), CheckpointError> {
    let params = model.params();
    let mut buf = Vec::with_capacity(16 + params.count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config()).expect("config serializes");
    buf.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    buf.extend_from_slice(&cfg);
    let layout = params.layout();
    buf.extend_from_slice(&(layout.len() as u32).to_le_bytes());
    for ((name, shape), data) in layout.iter().zip(params.slices()) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            CheckpointError::Corrupt(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<TransformerModel, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

/// Loads a checkpoint and checks that it was built for `vocab_size` tokens.
pub fn load_checkpoint_for(path: &Path, vocab_size: usize) -> Result<TransformerModel, CheckpointError> {
    let model = load_checkpoint(path)?;
    if model.config().vocab_size != vocab_size {
        return Err(CheckpointError::Config(format!(
            "vocab_size is {} but {} was expected",
            model.config().vocab_size,
            vocab_size
        )));
    }
    Ok(model)
}

fn decode(bytes: &[u8]) -> Result<TransformerModel, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let cfg_len = r.u64("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(cfg_len, "config")?)
        .map_err(|e| CheckpointError::Corrupt(format!("config: {e}")))?;
    config
        .validate()
        .map_err(|e| CheckpointError::Config(e.to_string()))?;

    let mut params = Params::zeros(&config);
    let layout = params.layout();
    let count = r.u32("tensor count")? as usize;
    if count != layout.len() {
        return Err(CheckpointError::Config(format!(
            "{count} tensors stored, config implies {}",
            layout.len()
        )));
    }
    for ((name, shape), dst) in layout.iter().zip(params.slices_mut()) {
        let name_len = r.u32("tensor name length")? as usize;
        let stored = r.take(name_len, "tensor name")?;
        if stored != name.as_bytes() {
            return Err(CheckpointError::Config(format!(
                "expected tensor `{name}`, found `{}`",
                String::from_utf8_lossy(stored)
            )));
        }
        let rank = r.u32("tensor rank")? as usize;
        let dims = (0..rank)
            .map(|_| r.u64("tensor dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(CheckpointError::Config(format!(
                "tensor `{name}` has shape {dims:?}, config implies {shape:?}"
            )));
        }
        let data = r.take(dst.len() * 8, name)?;
        for (v, chunk) in dst.iter_mut().zip(data.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    TransformerModel::from_params(config, params).map_err(|e| CheckpointError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TransformerModel {
        TransformerModel::new(ModelConfig::tiny(7)).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.forward(&[0, 1, 2]).unwrap(), m.forward(&[0, 1, 2]).unwrap());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&model(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn distinguishable_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Io { .. })));

        fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::BadMagic)));

        save_checkpoint(&model(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 99;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Version { found: 99, .. })
        ));

        save_checkpoint(&model(), &path).unwrap();
        assert!(matches!(load_checkpoint_for(&path, 131), Err(CheckpointError::Config(_))));
        assert!(load_checkpoint_for(&path, 7).is_ok());
    }
}

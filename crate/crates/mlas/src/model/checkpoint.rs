//! Versioned binary checkpoint: named tensors plus the model config and
//! the vocabulary fingerprint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "MLASCKP1"
//! version u32
//! seed    u64      top-level experiment seed (provenance)
//! step    u64      training step the parameters were taken at
//! vocab   u64      vocabulary fingerprint
//! cfg_len u32      followed by the ModelConfig as JSON
//! count   u32      number of tensors, then per tensor:
//!   name_len u32, name bytes,
//!   rank u8 (1 or 2), dims (u32 each),
//!   data (f64 little-endian)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{LasParams, ModelConfig};
use crate::numerics::{NamedTensors, Shape, Tensor};

const MAGIC: &[u8; 8] = b"MLASCKP1";
const VERSION: u32 = 1;

/// A checkpoint: parameters plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: LasParams,
    pub seed: u64,
    pub step: u64,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&ckpt.seed.to_le_bytes());
    buf.extend_from_slice(&ckpt.step.to_le_bytes());
    buf.extend_from_slice(&ckpt.params.vocab_fingerprint.to_le_bytes());
    let cfg = serde_json::to_vec(&ckpt.params.config)
        .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    buf.extend_from_slice(&(ckpt.params.tensors.len() as u32).to_le_bytes());
    for (name, tensor) in ckpt.params.tensors.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        match tensor.shape {
            Shape::Vector(n) => {
                buf.push(1);
                buf.extend_from_slice(&(n as u32).to_le_bytes());
            }
            Shape::Matrix(r, c) => {
                buf.push(2);
                buf.extend_from_slice(&(r as u32).to_le_bytes());
                buf.extend_from_slice(&(c as u32).to_le_bytes());
            }
        }
        for v in &tensor.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Format(format!("{path:?} is not a checkpoint")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let seed = r.u64()?;
    let step = r.u64()?;
    let vocab_fingerprint = r.u64()?;
    let cfg_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = NamedTensors::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| Error::Format(format!("checkpoint tensor name: {e}")))?;
        let rank = r.u8()?;
        let shape = match rank {
            1 => Shape::Vector(r.u32()? as usize),
            2 => {
                let rows = r.u32()? as usize;
                let cols = r.u32()? as usize;
                Shape::Matrix(rows, cols)
            }
            other => return Err(Error::Format(format!("tensor rank {other}"))),
        };
        let mut data = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            data.push(r.f64()?);
        }
        tensors.insert(&name, Tensor { shape, data })?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("checkpoint has trailing bytes".into()));
    }
    Ok(Checkpoint {
        params: LasParams {
            config,
            tensors,
            vocab_fingerprint,
        },
        seed,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn checkpoint_round_trip_bytes() {
        let dir = std::env::temp_dir().join(format!("mlas-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let config = ModelConfig::desk_default(Variant::CondEnc, 16, 20, 3);
        let params = LasParams::init(config, 0xfeed, 5).unwrap();
        let ckpt = Checkpoint {
            params,
            seed: 42,
            step: 137,
        };
        let a = dir.join("a.ckpt");
        let b = dir.join("b.ckpt");
        save_checkpoint(&a, &ckpt).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded, ckpt);
        save_checkpoint(&b, &loaded).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = std::env::temp_dir().join(format!("mlas-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bogus.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

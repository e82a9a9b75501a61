//! Versioned binary checkpoints: a JSON header followed by named tensors.

use std::io::{Read, Write};
use std::path::Path;

use polagree::conditioning::ConditioningMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::Bpe;
use crate::graph::Params;
use crate::model::{Model, ModelConfig};
use crate::scalar::Scalar;
use crate::train::{Adam, LogRow};

const MAGIC: &[u8; 8] = b"PLAGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Model, subword model, optimiser state and validation history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: ConditioningMode,
    pub bpe: Bpe,
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    pub history: Vec<LogRow>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    mode: ConditioningMode,
    bpe: String,
    history: Vec<LogRow>,
    adam_step: u64,
    adam_betas: (f64, f64),
    adam_eps: f64,
    tensors: Vec<(String, usize, usize)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor<T: Scalar>(out: &mut Vec<u8>, data: &[T]) {
    out.push(T::TAG);
    for &x in data {
        x.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let tag = self.take(1)?[0];
        if tag != f32::TAG {
            return Err(CheckpointError::Corrupt(format!("element tag {tag}")));
        }
        let raw = self.take(n * f32::BYTES)?;
        Ok(raw.chunks(f32::BYTES).map(f32::read_le).collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.model.params;
        let tensors: Vec<(String, usize, usize)> = (0..p.len()).map(|i| (p.names[i].clone(), p.shapes[i].0, p.shapes[i].1)).collect();
        let header = Header {
            config: self.model.config.clone(),
            mode: self.mode,
            bpe: self.bpe.to_json(),
            history: self.history.clone(),
            adam_step: self.adam.step,
            adam_betas: (self.adam.beta1, self.adam.beta2),
            adam_eps: self.adam.eps,
            tensors,
        };
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for group in [&p.values, &self.adam.m, &self.adam.v] {
            for t in group.iter() {
                put_tensor(&mut out, t);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        let mut params = Params::new();
        for (name, rows, cols) in &header.tensors {
            let v = r.tensor(rows * cols)?;
            params.add(name, *rows, *cols, v);
        }
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for dst in [&mut m, &mut v] {
            for (_, rows, cols) in &header.tensors {
                dst.push(r.tensor(rows * cols)?);
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(Checkpoint {
            mode: header.mode,
            bpe: Bpe::from_json(&header.bpe)?,
            model: Model::from_params(header.config, params),
            adam: Adam {
                m,
                v,
                step: header.adam_step,
                beta1: header.adam_betas.0,
                beta2: header.adam_betas.1,
                eps: header.adam_eps,
            },
            history: header.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn best_dev_chrf(&self) -> Option<f64> {
        self.history.last().map(|r| r.best_chrf)
    }
}

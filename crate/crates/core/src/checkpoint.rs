//! Checkpoint container.
//!
//! | offset | size | field |
//! |--------|------|-------|
//! | 0      | 8    | magic `SACKPT\0\0` |
//! | 8      | 4    | format version, u32 LE (currently 1) |
//! | 12     | 4    | header length `H`, u32 LE |
//! | 16     | H    | UTF-8 JSON header: `hyperparams`, `tensors` (name/rows/cols manifest), `iteration`, `optimizer` (`null` or `{config, step}`) |
//! | 16+H   | 8·P  | parameters as f64 LE, each tensor row-major, in manifest order |
//! | …      | 16·P | when `optimizer` is present: first moments, then second moments, same order |
//!
//! `P` is the total parameter count. Header JSON keys are emitted in a fixed
//! order, so equal checkpoints are byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams, TensorSpec};
use crate::ndcore::Matrix;
use crate::optim::{RAdamConfig, RAdamState};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SACKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    hyperparams: Hyperparams,
    tensors: Vec<TensorSpec>,
    iteration: u64,
    optimizer: Option<OptimizerHeader>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: RAdamConfig,
    step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub hyperparams: Hyperparams,
    pub params: ModelParams<T>,
    pub iteration: u64,
    pub optimizer: Option<RAdamState<T>>,
}

impl<T: Real> Checkpoint<T> {
    pub fn encode(&self) -> Vec<u8> {
        let header = Header {
            hyperparams: self.hyperparams.clone(),
            tensors: self.hyperparams.manifest(),
            iteration: self.iteration,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                config: o.config,
                step: o.step,
            }),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |tensors: &[&Matrix<T>]| {
            for t in tensors {
                for v in t.as_slice() {
                    out.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
        };
        put(&self.params.tensors());
        if let Some(o) = &self.optimizer {
            put(&o.m.iter().collect::<Vec<_>>());
            put(&o.v.iter().collect::<Vec<_>>());
        }
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::format(path, 0, "not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                8,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = 16 + hlen;
        if bytes.len() < body {
            return Err(Error::format(path, bytes.len() as u64, "truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..body])
            .map_err(|e| Error::format(path, 16, format!("bad header: {e}")))?;
        header.hyperparams.validate()?;
        if header.tensors != header.hyperparams.manifest() {
            return Err(Error::format(
                path,
                16,
                "tensor manifest does not match hyperparameters",
            ));
        }
        let count: usize = header.tensors.iter().map(TensorSpec::len).sum();
        let groups = if header.optimizer.is_some() { 3 } else { 1 };
        let expected = body + 8 * count * groups;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                bytes.len().min(expected) as u64,
                format!(
                    "payload length mismatch: expected {expected} bytes, found {}",
                    bytes.len()
                ),
            ));
        }
        let mut offset = body;
        let mut take = |specs: &[TensorSpec]| -> Result<Vec<Matrix<T>>> {
            specs
                .iter()
                .map(|s| {
                    let data = bytes[offset..offset + 8 * s.len()]
                        .chunks_exact(8)
                        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
                        .collect();
                    let at = offset;
                    offset += 8 * s.len();
                    Matrix::new(s.rows, s.cols, data)
                        .map_err(|e| Error::format(path, at as u64, e.to_string()))
                })
                .collect()
        };
        let params = ModelParams::from_tensors(&header.hyperparams, take(&header.tensors)?)?;
        let optimizer = match header.optimizer {
            Some(o) => Some(RAdamState {
                config: o.config,
                step: o.step,
                m: take(&header.tensors)?,
                v: take(&header.tensors)?,
            }),
            None => None,
        };
        Ok(Self {
            hyperparams: header.hyperparams,
            params,
            iteration: header.iteration,
            optimizer,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(path, &bytes)
    }
}

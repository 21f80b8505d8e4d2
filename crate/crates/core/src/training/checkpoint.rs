//! Versioned checkpoint container: an 8-byte magic, a little-endian `u32`
//! version and `u64` header length, a JSON header, then little-endian `f32`
//! tensor data addressed by the header's directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, NetworkSpec};

use super::adam::Adam;
use super::history::History;
use super::schedule::{LrScheduler, OptimizerConfig, TrainingSchedule};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"IFLOWCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    epoch: usize,
    seed: u64,
    schedule: Option<TrainingSchedule>,
    scheduler: Option<LrScheduler>,
    optimizer: Option<(OptimizerConfig, u64)>,
    history: History,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub optimizer: Option<Adam>,
    pub scheduler: Option<LrScheduler>,
    pub schedule: Option<TrainingSchedule>,
    /// Completed epochs.
    pub epoch: usize,
    /// Base seed of the run; per-epoch streams derive from it.
    pub seed: u64,
    pub history: History,
}

impl Checkpoint {
    pub fn inference(network: Network) -> Self {
        Checkpoint {
            network,
            optimizer: None,
            scheduler: None,
            schedule: None,
            epoch: 0,
            seed: 0,
            history: History::default(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut payload: Vec<f32> = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, data: &[f32]| {
            tensors.push(TensorEntry {
                name,
                shape,
                offset: payload.len() as u64,
                len: data.len() as u64,
            });
            payload.extend_from_slice(data);
        };
        for (name, shape, data) in self.network.state() {
            push(name, shape, data);
        }
        if let Some(adam) = &self.optimizer {
            for ((p, m), v) in self.network.params().zip(&adam.m).zip(&adam.v) {
                push(format!("adam.m.{}", p.name), p.shape.clone(), m);
                push(format!("adam.v.{}", p.name), p.shape.clone(), v);
            }
        }
        let header = Header {
            spec: self.network.spec().clone(),
            epoch: self.epoch,
            seed: self.seed,
            schedule: self.schedule.clone(),
            scheduler: self.scheduler.clone(),
            optimizer: self.optimizer.as_ref().map(|a| (a.config, a.step)),
            history: self.history.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format {
            offset: PREAMBLE as u64,
            message: format!("cannot encode header: {e}"),
        })?;
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + 4 * payload.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE {
            return Err(Error::format(bytes.len() as u64, "checkpoint shorter than its preamble"));
        }
        if bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                8,
                format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
            ));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = (bytes.len() - PREAMBLE) as u64;
        if header_len > body {
            return Err(Error::format(12, format!("header length {header_len} exceeds the {body} remaining bytes")));
        }
        let payload_start = PREAMBLE + header_len as usize;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..payload_start])
            .map_err(|e| Error::format(PREAMBLE as u64, format!("bad header: {e}")))?;
        let payload = &bytes[payload_start..];
        if payload.len() % 4 != 0 {
            return Err(Error::format(payload_start as u64, "tensor data is not a whole number of f32 values"));
        }
        let floats = (payload.len() / 4) as u64;
        let mut tensors = std::collections::HashMap::new();
        for t in &header.tensors {
            let end = t.offset.checked_add(t.len).filter(|&e| e <= floats).ok_or_else(|| {
                Error::format(
                    payload_start as u64 + 4 * t.offset.min(floats),
                    format!("tensor {} runs past the end of the file", t.name),
                )
            })?;
            let data: Vec<f32> = payload[4 * t.offset as usize..4 * end as usize]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(t.name.clone(), data);
        }
        let mut network = Network::new(header.spec.clone(), 0)?;
        network.load_state(|name| tensors.get(name).map(Vec::as_slice))?;
        let optimizer = match header.optimizer {
            Some((config, step)) => {
                let mut m = Vec::new();
                let mut v = Vec::new();
                for p in network.params() {
                    let fetch = |kind: &str| {
                        let key = format!("adam.{kind}.{}", p.name);
                        tensors
                            .get(&key)
                            .filter(|d| d.len() == p.value.len())
                            .cloned()
                            .ok_or_else(|| Error::Data(format!("checkpoint lacks optimizer tensor {key}")))
                    };
                    m.push(fetch("m")?);
                    v.push(fetch("v")?);
                }
                Some(Adam { config, step, m, v })
            }
            None => None,
        };
        Ok(Checkpoint {
            network,
            optimizer,
            scheduler: header.scheduler,
            schedule: header.schedule,
            epoch: header.epoch,
            seed: header.seed,
            history: header.history,
        })
    }

    /// Write atomically via a sibling temporary file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

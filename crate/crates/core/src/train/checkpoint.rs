//! Binary checkpoints.
//!
//! Layout (little-endian): magic `HCN1`, format version `u32`, config length
//! `u64` and that many bytes of JSON (graph + metadata), tensor count `u32`,
//! then per tensor: name length `u32`, UTF-8 name, dtype code `u8`, rank
//! `u32`, `rank` dims as `u64`, payload. Tensors are written sorted by name so
//! equal checkpoints serialize to equal bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use crate::arch::{GraphFile, ModelGraph, ParamStore, GRAPH_VERSION};
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCN1";
pub const CHECKPOINT_VERSION: u32 = 1;

const PARAM: &str = "param:";
const MOMENT1: &str = "adam.m:";
const MOMENT2: &str = "adam.v:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub config: AdamConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
    /// Class name of every output index (the label remapping of a branch).
    pub classes: Vec<String>,
    /// Parameter-name prefixes that were frozen.
    #[serde(default)]
    pub frozen: Vec<String>,
    pub optimizer: Option<OptimizerMeta>,
}

#[derive(Serialize, Deserialize)]
struct Blob {
    graph: GraphFile,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub graph: ModelGraph,
    pub meta: CheckpointMeta,
    pub adam: Option<AdamState>,
}

fn push_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DType::F32 as u8);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file: wanted {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, v: u64) -> Result<usize> {
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} too large")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let name_len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let code = self.take(1)?[0];
        let dtype = DType::from_code(code)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}`: unknown dtype code {code}")))?;
        let rank = self.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = self.u64()?;
            dims.push(self.len(d)?);
        }
        let count: usize = dims.iter().product();
        let payload = self.take(count.checked_mul(dtype.size()).ok_or_else(|| {
            Error::Checkpoint(format!("tensor `{name}` is too large"))
        })?)?;
        let data: Vec<f32> = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
                .collect(),
        };
        let t = Tensor::new(dims, data).map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
        Ok((name, t))
    }
}

impl Checkpoint {
    pub fn new(graph: ModelGraph, meta: CheckpointMeta, adam: Option<AdamState>) -> Self {
        Checkpoint { graph, meta, adam }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.meta.clone();
        meta.optimizer = self.adam.as_ref().map(|a| OptimizerMeta {
            config: a.config,
            step: a.step,
        });
        let blob = serde_json::to_vec(&Blob {
            graph: GraphFile::new(self.graph.config().clone()),
            meta,
        })
        .expect("checkpoint metadata serializes");

        let mut tensors: BTreeMap<String, &Tensor<f32>> = BTreeMap::new();
        for (name, p) in self.graph.params().iter() {
            tensors.insert(format!("{PARAM}{name}"), &p.value);
        }
        if let Some(adam) = &self.adam {
            for (name, t) in &adam.m {
                tensors.insert(format!("{MOMENT1}{name}"), t);
            }
            for (name, t) in &adam.v {
                tensors.insert(format!("{MOMENT2}{name}"), t);
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            push_tensor(&mut out, &name, t);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(&CHECKPOINT_MAGIC[..]) {
            return Err(Error::Checkpoint("not a checkpoint (bad magic bytes)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let blob_len = r.u64()?;
        let blob_len = r.len(blob_len)?;
        let blob_bytes = r.take(blob_len)?;
        let probe: serde_json::Value = serde_json::from_slice(blob_bytes)?;
        let graph_version = probe["graph"]["version"].as_u64().unwrap_or(0) as u32;
        if graph_version != GRAPH_VERSION {
            return Err(Error::Version {
                what: "model graph",
                found: graph_version,
                expected: GRAPH_VERSION,
            });
        }
        let blob: Blob = serde_json::from_value(probe)?;

        let count = r.u32()?;
        let mut params = ParamStore::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        let trainable: BTreeMap<String, bool> = blob
            .graph
            .model
            .summary()?
            .params
            .iter()
            .map(|p| (p.name.clone(), p.role.trainable()))
            .collect();
        for _ in 0..count {
            let (name, t) = r.tensor()?;
            if let Some(p) = name.strip_prefix(PARAM) {
                let is_trainable = *trainable
                    .get(p)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor `{p}` is not part of the graph")))?;
                params.insert(p, t, is_trainable)?;
            } else if let Some(p) = name.strip_prefix(MOMENT1) {
                m.insert(p.to_string(), t);
            } else if let Some(p) = name.strip_prefix(MOMENT2) {
                v.insert(p.to_string(), t);
            } else {
                return Err(Error::Checkpoint(format!("unexpected tensor `{name}`")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        for prefix in &blob.meta.frozen {
            params.set_frozen(prefix, true);
        }
        let graph = ModelGraph::from_parts(blob.graph.model, params)?;
        let adam = blob.meta.optimizer.as_ref().map(|o| AdamState {
            config: o.config,
            step: o.step,
            m,
            v,
        });
        Ok(Checkpoint {
            graph,
            meta: blob.meta,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

//! Model checkpoints: JSON manifest (config + tensor index) and a
//! little-endian `f32` payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_f32, encode_f32, fnv1a64, payload_name, read_json, read_payload, sibling, write_bytes, write_json};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{GrnConfig, GrnParams, Prototype};

const FORMAT: &str = "grn-checkpoint";
const VERSION: u32 = 1;

/// Free-form context stored with a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    #[serde(default)]
    pub class_names: Vec<String>,
    /// Effective configuration of the run that produced the checkpoint.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: GrnParams,
    pub prototypes: Vec<Prototype>,
    pub meta: CheckpointMeta,
    /// FNV-1a of the payload.
    pub digest: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in values.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct NormEntry {
    name: String,
    populated: bool,
    momentum: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: GrnConfig,
    tensors: Vec<TensorEntry>,
    batch_norms: Vec<NormEntry>,
    meta: CheckpointMeta,
    payload: String,
    payload_bytes: usize,
    checksum: String,
}

fn collect(params: &GrnParams, prototypes: &[Prototype]) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out: Vec<(String, Vec<usize>, Vec<f64>)> = params
        .learnable()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec(), t.data().to_vec()))
        .collect();
    for (name, bn) in params.batch_norms() {
        out.push((format!("{name}.running_mean"), vec![bn.channels()], bn.running_mean.clone()));
        out.push((format!("{name}.running_var"), vec![bn.channels()], bn.running_var.clone()));
    }
    for p in prototypes {
        out.push((format!("proto.{}", p.class_id), p.embedding.shape().to_vec(), p.embedding.data().to_vec()));
    }
    out
}

/// Write `path` (manifest) and its `.bin` payload; returns the payload digest.
pub fn save_checkpoint(path: &Path, params: &GrnParams, prototypes: &[Prototype], meta: &CheckpointMeta) -> Result<u64> {
    let items = collect(params, prototypes);
    let mut tensors = Vec::with_capacity(items.len());
    let mut offset = 0;
    for (name, shape, data) in &items {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
        });
        offset += data.len();
    }
    let bytes = encode_f32(items.iter().flat_map(|(_, _, d)| d.iter().copied()));
    let digest = fnv1a64(&bytes);
    let payload = payload_name(path);
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: params.config.clone(),
        tensors,
        batch_norms: params
            .batch_norms()
            .into_iter()
            .map(|(name, bn)| NormEntry {
                name: name.into(),
                populated: bn.populated,
                momentum: bn.momentum,
                eps: bn.eps,
            })
            .collect(),
        meta: meta.clone(),
        payload: payload.clone(),
        payload_bytes: bytes.len(),
        checksum: format!("{digest:016x}"),
    };
    write_bytes(&sibling(path, &payload), &bytes)?;
    write_json(path, &manifest)?;
    Ok(digest)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let m: Manifest = read_json(path, "checkpoint manifest")?;
    if m.format != FORMAT {
        return Err(Error::format("checkpoint manifest", format!("unknown format {:?}", m.format)));
    }
    if m.version != VERSION {
        return Err(Error::Version {
            expected: VERSION,
            found: m.version,
        });
    }
    let checksum = u64::from_str_radix(&m.checksum, 16)
        .map_err(|e| Error::format("checkpoint manifest", format!("checksum: {e}")))?;
    let bytes = read_payload(&sibling(path, &m.payload), m.payload_bytes, checksum)?;
    let values = decode_f32(&bytes);

    let lookup = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let e = m
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor {name}")))?;
        if e.shape != shape {
            return Err(Error::shape(
                "checkpoint",
                format!("{name}: stored {:?}, config implies {shape:?}", e.shape),
            ));
        }
        let n: usize = shape.iter().product();
        values
            .get(e.offset..e.offset + n)
            .map(<[f64]>::to_vec)
            .ok_or(Error::Truncated {
                expected: (e.offset + n) * 4,
                actual: bytes.len(),
            })
    };

    let mut params = GrnParams::init(&m.config, 0)?;
    for (name, t) in params.learnable_mut() {
        let v = lookup(&name, &t.shape().to_vec())?;
        t.data_mut().copy_from_slice(&v);
    }
    for (name, bn) in params.batch_norms_mut() {
        let c = bn.channels();
        bn.running_mean = lookup(&format!("{name}.running_mean"), &[c])?;
        bn.running_var = lookup(&format!("{name}.running_var"), &[c])?;
        let entry = m
            .batch_norms
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing batch norm {name}")))?;
        bn.populated = entry.populated;
        bn.momentum = entry.momentum;
        bn.eps = entry.eps;
    }
    let emb_shape = m.config.shapes()?.embedding_shape();
    let mut prototypes = Vec::new();
    for e in m.tensors.iter().filter(|e| e.name.starts_with("proto.")) {
        let class_id = e.name["proto.".len()..]
            .parse()
            .map_err(|_| Error::format("checkpoint", format!("bad prototype name {}", e.name)))?;
        let data = lookup(&e.name, &emb_shape)?;
        prototypes.push(Prototype {
            class_id,
            embedding: Tensor::from_vec(&emb_shape, data)?,
        });
    }
    Ok(Checkpoint {
        params,
        prototypes,
        meta: m.meta,
        digest: checksum,
    })
}

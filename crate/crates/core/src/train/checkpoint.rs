//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` manifest length, a JSON
//! manifest, then the raw little-endian payload. The manifest lists every
//! tensor with its name, shape, precision, payload offset and byte length.

use serde::{Deserialize, Serialize};

use super::{AdamState, TrainState};
use crate::data::PreprocessConfig;
use crate::error::{Error, Result};
use crate::network::{Model, NetworkConfig, ParamStore};
use crate::tensor::{Precision, Scalar, Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSPNETCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 4],
    precision: Precision,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    network: NetworkConfig,
    preprocess: PreprocessConfig,
    state: TrainState,
    entries: Vec<Entry>,
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub network: NetworkConfig,
    /// Colour normalisation the parameters were trained with.
    pub preprocess: PreprocessConfig,
    pub state: TrainState,
    pub params: Vec<(String, Tensor<T>)>,
    pub adam: AdamState<T>,
}

const PARAM: &str = "param/";
const MOMENT1: &str = "adam_m/";
const MOMENT2: &str = "adam_v/";

/// Serialises parameters, optimizer moments and training progress.
pub fn save_checkpoint<T: Scalar>(
    network: &NetworkConfig,
    preprocess: &PreprocessConfig,
    params: &ParamStore<T>,
    state: &TrainState,
    adam: &AdamState<T>,
) -> Result<Vec<u8>> {
    if adam.m.len() != params.len() || adam.v.len() != params.len() {
        return Err(Error::Contract("optimizer state does not match parameters".into()));
    }
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    let groups: [(&str, &[Tensor<T>]); 3] = [(PARAM, params.values()), (MOMENT1, &adam.m), (MOMENT2, &adam.v)];
    for (prefix, tensors) in groups {
        for (id, t) in params.ids().zip(tensors) {
            let offset = payload.len() as u64;
            for &v in t.data() {
                v.write_le(&mut payload);
            }
            entries.push(Entry {
                name: format!("{prefix}{}", params.name(id)),
                shape: t.shape().dims(),
                precision: T::PRECISION,
                offset,
                len: payload.len() as u64 - offset,
            });
        }
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        network: network.clone(),
        preprocess: preprocess.clone(),
        state: TrainState {
            adam_step: adam.step,
            ..state.clone()
        },
        entries,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Contract(format!("manifest encoding: {e}")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), "truncated checkpoint header"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(8, format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let mend = usize::try_from(mlen)
        .ok()
        .and_then(|l| l.checked_add(HEADER_LEN))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format(12, format!("manifest length {mlen} exceeds file size {}", bytes.len())))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..mend])
        .map_err(|e| Error::format(HEADER_LEN, format!("corrupt manifest: {e}")))?;
    if manifest.version != version {
        return Err(Error::format(HEADER_LEN, "manifest version disagrees with header"));
    }
    let payload = &bytes[mend..];
    let width = T::PRECISION.byte_width();
    let mut params = Vec::new();
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for e in &manifest.entries {
        if e.precision != T::PRECISION {
            return Err(Error::Config(format!(
                "checkpoint tensor {} is {}, model uses {}",
                e.name,
                e.precision,
                T::PRECISION
            )));
        }
        let shape = Shape::from(e.shape);
        let (start, len) = (e.offset as usize, e.len as usize);
        if len != shape.numel() * width {
            return Err(Error::format(HEADER_LEN, format!("entry {} length {len} does not match shape {shape}", e.name)));
        }
        let chunk = payload
            .get(start..start.saturating_add(len))
            .ok_or_else(|| Error::format(mend + start, format!("entry {} runs past end of file", e.name)))?;
        let t = Tensor::from_vec(shape, chunk.chunks_exact(width).map(T::read_le).collect())?;
        if let Some(n) = e.name.strip_prefix(PARAM) {
            params.push((n.to_string(), t));
        } else if e.name.starts_with(MOMENT1) {
            m.push(t);
        } else if e.name.starts_with(MOMENT2) {
            v.push(t);
        } else {
            return Err(Error::format(HEADER_LEN, format!("unknown entry {}", e.name)));
        }
    }
    if m.len() != params.len() || v.len() != params.len() {
        return Err(Error::format(HEADER_LEN, "optimizer moments do not match parameter count"));
    }
    Ok(Checkpoint {
        network: manifest.network,
        preprocess: manifest.preprocess,
        adam: AdamState {
            step: manifest.state.adam_step,
            m,
            v,
        },
        state: manifest.state,
        params,
    })
}

impl<T: Scalar> Checkpoint<T> {
    /// Copies parameters into `model`; the network configuration must match.
    pub fn restore(self, model: &mut Model<T>) -> Result<(TrainState, AdamState<T>)> {
        if self.network != model.config {
            return Err(Error::Config(format!(
                "checkpoint network configuration differs from model: {}",
                config_diff(&self.network, &model.config)
            )));
        }
        for (id, (name, _)) in model.params.ids().zip(&self.params) {
            if model.params.name(id) != name {
                return Err(Error::Config(format!("checkpoint parameter {name} does not match {}", model.params.name(id))));
            }
        }
        model.params.load_values(self.params.into_iter().map(|(_, t)| t).collect())?;
        Ok((self.state, self.adam))
    }

    /// Builds a fresh model from the stored configuration and parameters.
    pub fn into_model(self) -> Result<(Model<T>, TrainState, AdamState<T>)> {
        let mut model = Model::new(self.network.clone())?;
        let (state, adam) = self.restore(&mut model)?;
        Ok((model, state, adam))
    }
}

/// Names the top-level fields that differ.
fn config_diff(a: &NetworkConfig, b: &NetworkConfig) -> String {
    let (ja, jb) = (serde_json::to_value(a), serde_json::to_value(b));
    match (ja, jb) {
        (Ok(serde_json::Value::Object(ma)), Ok(serde_json::Value::Object(mb))) => {
            let fields: Vec<&str> = ma.iter().filter(|(k, v)| mb.get(*k) != Some(v)).map(|(k, _)| k.as_str()).collect();
            format!("fields {}", fields.join(", "))
        }
        _ => "unknown fields".into(),
    }
}

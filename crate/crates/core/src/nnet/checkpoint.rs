//! Checkpoint file layout:
//!
//! ```text
//! b"DRCK" | u32 LE header length | JSON header | f32 LE parameter blob
//! ```
//!
//! The blob holds every parameterized layer in order, weights then bias.
//! The header records the architecture and the byte offset of each layer's
//! parameters within the blob.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Layer, LayerSpec, Mode, Network, NnetError, Scalar};

const MAGIC: &[u8; 4] = b"DRCK";
const FORMAT: &str = "drgrade-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub layer: usize,
    /// Byte offset of the weights within the blob.
    pub offset: usize,
    pub weights: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub seed: u64,
    pub mode: Mode,
    pub epoch: usize,
    pub params: Vec<ParamEntry>,
    pub blob_bytes: usize,
}

pub fn save_checkpoint<T: Scalar, W: Write>(
    net: &Network<T>,
    epoch: usize,
    mut out: W,
) -> Result<CheckpointHeader, NnetError> {
    let mut blob = Vec::new();
    let mut params = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let Some((w, b)) = layer.params() else { continue };
        params.push(ParamEntry { layer: i, offset: blob.len(), weights: w.len(), bias: b.len() });
        for v in w.iter().chain(b) {
            blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        architecture: Architecture { input_shape: net.input_shape().to_vec(), layers: net.specs() },
        seed: net.seed(),
        mode: net.mode(),
        epoch,
        params,
        blob_bytes: blob.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnetError::Checkpoint(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| NnetError::Checkpoint("header too large".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&blob)?;
    Ok(header)
}

pub fn load_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<(Network<T>, CheckpointHeader), NnetError> {
    let bad = |m: &str| NnetError::Checkpoint(m.to_string());
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing DRCK magic"));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| NnetError::Checkpoint(format!("header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad("unsupported checkpoint format or version"));
    }
    let blob = &bytes[8 + len..];
    if blob.len() != header.blob_bytes {
        return Err(bad("blob length does not match header"));
    }

    let layers: Vec<Layer<T>> = header.architecture.layers.iter().map(Layer::from_spec).collect();
    let mut net = Network::new(header.architecture.input_shape.clone(), layers, header.seed)
        .map_err(|e| NnetError::Checkpoint(format!("architecture: {e}")))?;
    let read = |offset: usize, count: usize| -> Result<Vec<T>, NnetError> {
        let raw = blob
            .get(offset..offset + 4 * count)
            .ok_or_else(|| NnetError::Checkpoint("parameter range outside blob".into()))?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    };
    let expected: Vec<usize> =
        net.layers().iter().enumerate().filter(|(_, l)| l.has_params()).map(|(i, _)| i).collect();
    if expected != header.params.iter().map(|p| p.layer).collect::<Vec<_>>() {
        return Err(bad("parameter table does not match architecture"));
    }
    for entry in &header.params {
        let layer = net.layer_mut(entry.layer);
        let (w, b) = layer.params_mut().expect("checked above");
        if w.len() != entry.weights || b.len() != entry.bias {
            return Err(NnetError::Checkpoint(format!("layer {}: parameter count mismatch", entry.layer)));
        }
        w.copy_from_slice(&read(entry.offset, entry.weights)?);
        b.copy_from_slice(&read(entry.offset + 4 * entry.weights, entry.bias)?);
    }
    net.set_mode(header.mode);
    Ok((net, header))
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::ParameterSet;
use crate::persist::config::RunConfig;
use crate::persist::write_atomic;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    config: RunConfig,
    label_scale: f64,
    seed: u64,
    iteration: u64,
    tensors: Vec<TensorEntry>,
    payload_bytes: u64,
    sha256: String,
}

/// Parameters plus everything needed to use them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Divisor mapping RUL labels to model units.
    pub label_scale: f64,
    pub seed: u64,
    pub iteration: u64,
    pub params: ParameterSet,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Serialized form: `u64` little-endian header length, the JSON header,
/// then every tensor as little-endian `f64` in header order.
pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(ck.params.num_values() * 8);
    let mut tensors = Vec::with_capacity(ck.params.len());
    for (name, t) in ck.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: ck.config.clone(),
        label_scale: ck.label_scale,
        seed: ck.seed,
        iteration: ck.iteration,
        tensors,
        payload_bytes: payload.len() as u64,
        sha256: hex(&Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 {
        return Err(bad("file too short for a header"));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(8..8usize.saturating_add(hlen))
        .ok_or_else(|| bad("header extends past the end of the file"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "format version {} is not supported (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    let payload = &bytes[8 + hlen..];
    if payload.len() as u64 != header.payload_bytes || hex(&Sha256::digest(payload)) != header.sha256 {
        return Err(bad(format!(
            "payload checksum mismatch ({} bytes present, {} expected); file is truncated or corrupt",
            payload.len(),
            header.payload_bytes
        )));
    }

    let expected = header.config.model.init_seeded(0);
    if expected.len() != header.tensors.len() {
        return Err(bad(format!(
            "{} tensors stored, model config implies {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    let mut params = ParameterSet::new();
    for entry in &header.tensors {
        let want = expected
            .get(&entry.name)
            .ok_or_else(|| bad(format!("unexpected tensor {:?}", entry.name)))?;
        if want.shape() != entry.shape.as_slice() {
            return Err(bad(format!(
                "tensor {:?} has shape {:?}, model config implies {:?}",
                entry.name,
                entry.shape,
                want.shape()
            )));
        }
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let raw = payload
            .get(start..start + n * 8)
            .ok_or_else(|| bad(format!("tensor {:?} extends past the payload", entry.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    Ok(Checkpoint {
        config: header.config,
        label_scale: header.label_scale,
        seed: header.seed,
        iteration: header.iteration,
        params,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = RunConfig::default();
        let mut params = config.model.init_seeded(11);
        params.get_mut("rul.l4.b").unwrap().data_mut()[0] = f64::MIN_POSITIVE;
        params.get_mut("rul.rho").unwrap().data_mut()[1] = -0.0;
        Checkpoint {
            config,
            label_scale: 125.0,
            seed: 11,
            iteration: 42,
            params,
        }
    }

    fn bits(p: &ParameterSet) -> Vec<u64> {
        p.flatten().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(bits(&back.params), bits(&ck.params));
        assert_eq!(back.params.names().collect::<Vec<_>>(), ck.params.names().collect::<Vec<_>>());
        assert_eq!(back.config, ck.config);
        assert_eq!(back.iteration, 42);
    }

    #[test]
    fn truncation_fails_the_checksum() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let e = decode_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(e.contains("checksum"), "{e}");
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(decode_checkpoint(&flipped).is_err());
    }

    #[test]
    fn edited_shape_is_rejected() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[8..8 + hlen].to_vec()).unwrap();
        let edited = header.replacen("\"name\":\"rul.rho\",\"shape\":[16]", "\"name\":\"rul.rho\",\"shape\":[4,4]", 1);
        assert_ne!(edited, header);
        let mut out = (edited.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&bytes[8 + hlen..]);
        let e = decode_checkpoint(&out).unwrap_err().to_string();
        assert!(e.contains("shape"), "{e}");
    }

    #[test]
    fn version_is_checked() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[8..8 + hlen].to_vec()).unwrap();
        let edited = header.replacen("\"version\":1", "\"version\":9", 1);
        let mut out = (edited.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&bytes[8 + hlen..]);
        assert!(decode_checkpoint(&out).unwrap_err().to_string().contains("version"));
    }
}

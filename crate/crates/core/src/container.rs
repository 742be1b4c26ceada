//! Versioned binary container: magic, format version, JSON header, payload.
//!
//! ```text
//! [8]  b"FCEVBIN\0"
//! [4]  format version, u32 LE
//! [8]  header length, u64 LE
//! [..] header, UTF-8 JSON object with at least `kind` and `endianness`
//! [..] payload
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FCEVBIN\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(kind: &str, mut header: Value, payload: &[u8]) -> Result<Vec<u8>> {
    let obj = header
        .as_object_mut()
        .ok_or_else(|| Error::Format("container header must be a JSON object".into()))?;
    obj.insert("kind".into(), Value::from(kind));
    obj.insert("endianness".into(), Value::from("little"));
    obj.insert("version".into(), Value::from(FORMAT_VERSION));
    let h = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + h.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn decode<'a>(bytes: &'a [u8], kind: &str) -> Result<(Value, &'a [u8])> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not an fcev container (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(Error::Format("truncated container header".into()));
    }
    let header: Value = serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(e.to_string()))?;
    match header.get("kind").and_then(Value::as_str) {
        Some(k) if k == kind => {}
        other => {
            return Err(Error::Format(format!("expected a `{kind}` container, found {other:?}")));
        }
    }
    if header.get("endianness").and_then(Value::as_str) != Some("little") {
        return Err(Error::Format("unsupported endianness".into()));
    }
    Ok((header, &body[hlen..]))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Serializes a model with bincode inside a container.
pub fn encode_model<T: Serialize>(kind: &str, header: Value, model: &T) -> Result<Vec<u8>> {
    let payload = bincode::serialize(model).map_err(|e| Error::Format(e.to_string()))?;
    encode(kind, header, &payload)
}

pub fn decode_model<T: DeserializeOwned>(bytes: &[u8], kind: &str) -> Result<(Value, T)> {
    let (header, payload) = decode(bytes, kind)?;
    let model = bincode::deserialize(payload).map_err(|e| Error::Format(e.to_string()))?;
    Ok((header, model))
}

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn le_bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("payload length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Hex SHA-256 of a byte string.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_kind_check() {
        let bytes = encode("table", serde_json::json!({"n": 3}), &f64s_to_le_bytes(&[1.0, -2.5, 3.0])).unwrap();
        let (h, p) = decode(&bytes, "table").unwrap();
        assert_eq!(h["n"], 3);
        assert_eq!(le_bytes_to_f64s(p).unwrap(), vec![1.0, -2.5, 3.0]);
        assert!(decode(&bytes, "model").is_err());
        assert!(decode(&bytes[..10], "table").is_err());
    }
}

//! Shared pieces of the on-disk formats: a JSON manifest next to a raw
//! little-endian `f32` payload, guarded by a 64-bit FNV-1a checksum.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Narrow to `f32` and encode little-endian regardless of host order.
pub fn encode_f32(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(what, e.to_string()))
}

/// Payload path stored relative to the manifest's directory.
pub fn sibling(manifest: &Path, file: &str) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new("")).join(file)
}

/// File name for the payload that accompanies `manifest`.
pub fn payload_name(manifest: &Path) -> String {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    format!("{stem}.bin")
}

/// Read a payload and verify its length and checksum.
pub fn read_payload(path: &Path, expected_len: usize, checksum: u64) -> Result<Vec<u8>> {
    let bytes = read_bytes(path)?;
    if bytes.len() < expected_len {
        return Err(Error::Truncated {
            expected: expected_len,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected_len {
        return Err(Error::format(
            "payload",
            format!("{} bytes, manifest describes {expected_len}", bytes.len()),
        ));
    }
    let actual = fnv1a64(&bytes);
    if actual != checksum {
        return Err(Error::Checksum {
            expected: checksum,
            actual,
        });
    }
    Ok(bytes)
}

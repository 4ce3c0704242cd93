//! Canonical JSON and content hashing.
//!
//! `serde_json` maps are ordered by key, so routing a value through
//! [`serde_json::Value`] yields lexicographic key order at every depth.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Compact canonical JSON: sorted keys, no insignificant whitespace.
pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    serde_json::to_string(&value).expect("JSON value serializes")
}

/// Pretty canonical JSON with a trailing newline, for files people read.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    let mut out = serde_json::to_string_pretty(&value).expect("JSON value serializes");
    out.push('\n');
    out
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

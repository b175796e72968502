//! Platform-independent hashing used wherever a value must be reproducible
//! across runs, machines, and thread schedules.

use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed parts, so `["ab", "c"]` and `["a", "bc"]`
/// never collide.
pub(crate) fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// First eight digest bytes as a little-endian integer.
pub(crate) fn hash_u64(parts: &[&[u8]]) -> u64 {
    let d = digest_parts(parts);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
pub(crate) fn unit_interval(parts: &[&[u8]]) -> f64 {
    (hash_u64(parts) >> 11) as f64 / (1u64 << 53) as f64
}

pub(crate) fn hex_digest(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

//! Sub-seed derivation.
//!
//! A stage seed is the first eight bytes (little endian) of
//! `SHA-256("<master>|<label>")`, where `label` names the cell coordinates and
//! pipeline stage, e.g. `wallgrasp|n=5|K=inf|q=0.8|rep=2|dynamics`.

use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_string().as_bytes());
    h.update(b"|");
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// SplitMix64 finalizer of `seed + index`, for cheap per-trial streams.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

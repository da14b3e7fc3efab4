//! Per-component seed streams derived from one top-level seed, so adding a
//! component never perturbs another's draws.

use sha2::{Digest, Sha256};

/// Seed for the stream named `label`.
pub fn stream(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

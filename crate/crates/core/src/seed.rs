//! Splittable seeding.
//!
//! Every randomized procedure takes one root seed. Child seeds are derived
//! from the root and a `/`-separated path label: the child seed is the first
//! eight bytes (little endian) of `SHA-256(root.to_le_bytes() || path)`.
//! Derivation is stable across platforms and releases, so experiment
//! artifacts are bitwise reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, path: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(path.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// RNG for the child stream `path` under `root`.
pub fn rng_for(root: u64, path: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

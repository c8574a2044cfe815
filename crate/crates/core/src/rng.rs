//! Seeding conventions.
//!
//! Every random stream is a `ChaCha20Rng` seeded with `seed_from_u64`, and
//! Gaussian entries come from `rand_distr::StandardNormal`. Child seeds are
//! the first eight bytes (little endian) of `SHA-256("{master}/{label}")`, so
//! adding a new labelled stream never shifts existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha20Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let digest = Sha256::digest(format!("{master}/{label}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

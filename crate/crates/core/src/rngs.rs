//! Deterministic RNG sub-streams.
//!
//! Every random stream in a run is a ChaCha8 generator seeded with the
//! first eight bytes (little-endian) of `SHA-256(master_seed_le ‖ label)`.
//! Labels are stable strings such as `"env:3"`, `"policy-noise:1"`,
//! `"init:phi"` or `"replay"`, so any other implementation can reproduce
//! the same streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master: u64, label: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, label))
}

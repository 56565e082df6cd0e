//! Named, reproducible random streams.
//!
//! Every source of randomness in an experiment is derived from a single
//! 64-bit seed plus a stream name ("init", "shuffle", "env", "sampling",
//! ...). Streams are mutually independent, so adding draws to one component
//! does not perturb any other.

use rand_chacha::ChaCha20Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

/// Deterministic RNG for the given (seed, stream name) pair.
pub fn stream(seed: u64, name: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// A u64 sub-seed for the given (seed, stream name, index) triple.
///
/// Used to hand each episode or child job its own seed without consuming
/// draws from a shared stream.
pub fn sub_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

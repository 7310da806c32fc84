use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a digest.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Seed for a named sub-stream of a master seed, so per-utterance draws do
/// not depend on generation order.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&master.to_le_bytes());
    h.write(key.as_bytes());
    h.finish()
}

pub fn rng_for(master: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, key))
}

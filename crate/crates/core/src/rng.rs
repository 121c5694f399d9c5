//! Counter-based seed derivation.
//!
//! Every random quantity in a run is drawn from its own ChaCha8 stream whose
//! key is a hash of `(base seed, tag, indices...)`. Streams therefore do not
//! depend on the order in which work is scheduled, so parallel and serial
//! executions produce identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags never collide for the same indices.
pub mod tag {
    pub const LABELS: u64 = 1;
    pub const LATENT: u64 = 2;
    pub const LOADING: u64 = 3;
    pub const EDGES: u64 = 4;
    pub const KMEANS: u64 = 5;
    pub const REPLICATION: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a single 64-bit key.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0xD1B5_4A32_D192_ED03)));
    }
    h
}

/// Independent generator for `(base, path)`.
pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    let key = derive_seed(base, path);
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(key ^ (i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

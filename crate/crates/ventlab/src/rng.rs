//! Deterministic seed derivation.
//!
//! Every random stream in the crate is derived from a master seed plus a
//! (tag, ids...) path, so parallel work never shares a stream and reruns
//! are bit-reproducible regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed`, a string tag, and integer ids.
pub fn derive_seed(seed: u64, tag: &str, ids: &[u64]) -> u64 {
    let mut s = splitmix64(seed ^ 0xa076_1d64_78bd_642f);
    for b in tag.as_bytes() {
        s = splitmix64(s ^ u64::from(*b));
    }
    for id in ids {
        s = splitmix64(s ^ *id);
    }
    s
}

/// Seeded stream cipher RNG used everywhere randomness is needed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Seed splitting.
//!
//! Every randomized component derives its generator seed from a parent seed
//! with [`child_seed`]:
//!
//! 1. FNV-1a (64 bit) over the parent seed as 8 little-endian bytes, the UTF-8
//!    bytes of the component name, a single `0xff` separator byte and the
//!    index as 8 little-endian bytes;
//! 2. the SplitMix64 finalizer applied to that hash.
//!
//! The scheme only uses integer arithmetic so other implementations can
//! reproduce it bit for bit. Generators are `ChaCha8Rng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for `component` number `index` from `parent`.
pub fn child_seed(parent: u64, component: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &parent.to_le_bytes());
    h = fnv1a(h, component.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &index.to_le_bytes());
    mix64(h)
}

/// The generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

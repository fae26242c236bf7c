//! Seeded RNG substreams for reproducible, schedule-independent sampling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, used to mix seeds and tags into substream keys.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent RNG from a base seed and a sequence of tags.
///
/// The same (seed, tags) always yields the same stream, so per-row or
/// per-resample substreams can be drawn in any order or in parallel
/// without affecting results.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        let mut s = acc ^ t;
        acc = splitmix64(&mut s);
    }
    for chunk in key.chunks_mut(8) {
        let mut s = acc;
        acc = splitmix64(&mut s);
        chunk.copy_from_slice(&acc.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Hash a string tag into a u64 for use with [`substream`] (FNV-1a).
pub fn tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

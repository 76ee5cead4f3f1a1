//! Labeled random stream derivation.
//!
//! A single master seed fans out into independent named streams so that
//! adding a new random consumer (or reordering device processing) never
//! perturbs draws made elsewhere. Streams are addressed by
//! `(master, label, index)`; the index distinguishes per-device or
//! per-attempt streams under the same label.
//!
//! Derivation: FNV-1a over the little-endian master seed, the label bytes,
//! and the little-endian index, fed to `ChaCha8Rng::seed_from_u64` (which
//! expands via SplitMix64). Both steps are stable across platforms and
//! library versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive the seed for stream `(master, label, index)`.
pub fn stream_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    h = fnv1a(h, label.as_bytes());
    fnv1a(h, &index.to_le_bytes())
}

/// Stream for a per-purpose singleton consumer (index 0).
pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    indexed_stream(master, label, 0)
}

/// Stream for consumer `index` under `label` (e.g. one stream per device).
pub fn indexed_stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, label, index))
}

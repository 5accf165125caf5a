//! Counter-based derivation of independent random substreams.
//!
//! A master seed plus an integer path (for example `[TAG_UPDATE, method,
//! run, sensor]`) deterministically selects a ChaCha12 stream. Streams for
//! different paths are independent for all practical purposes, and the
//! derivation is order-sensitive, so parallel workers can each derive their
//! own stream without sharing state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Path tags; keeping the domains disjoint makes accidental stream reuse
/// impossible.
pub const TAG_MEASUREMENTS: u64 = 0x4d45;
pub const TAG_INIT: u64 = 0x494e;
pub const TAG_UPDATE: u64 = 0x5550;
pub const TAG_VALIDATE: u64 = 0x5641;

/// SplitMix64 finalizer (Steele, Lea, Flood).
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `master` and `path` into a single 64-bit state.
pub fn substream_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x517c_c1b7_2722_0a95)));
    }
    state
}

/// Derives the ChaCha12 stream for `(master, path)`.
pub fn substream(master: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = substream_seed(master, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Folds an arbitrary label (e.g. a method name) into a path element.
pub fn label_tag(label: &str) -> u64 {
    let mut state = 0x243f_6a88_85a3_08d3;
    for b in label.as_bytes() {
        state = splitmix64(state ^ u64::from(*b));
    }
    state
}

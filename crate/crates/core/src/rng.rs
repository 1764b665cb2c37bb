//! Deterministic substream derivation.
//!
//! All randomness flows from one root seed through named substreams, so a
//! run is reproducible regardless of thread count or work scheduling: every
//! parallel work item (a cell, a restart, a level) draws from its own
//! `substream(root, name, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// A fresh root seed for the child task `(domain, index)`.
pub fn derive_seed(root: u64, domain: &str, index: u64) -> u64 {
    use rand::Rng;
    substream(root, domain, index).gen()
}

/// Seeded generator for the work item `(domain, index)` under `root`.
pub fn substream(root: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut state = splitmix64(root ^ fnv1a(domain.as_bytes()));
    state = splitmix64(state ^ index);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

//! Deterministic seed derivation.
//!
//! Every source of randomness in the toolkit is a ChaCha stream derived from
//! a single root seed and a component name, so one `--seed` flag reproduces
//! an entire run. Per-epoch streams additionally mix the epoch number, which
//! makes training resumable without persisting RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a over a byte string.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the seed for a named component from the root seed.
pub fn component_seed(root: u64, component: &str) -> u64 {
    root ^ fnv1a(component.as_bytes())
}

/// RNG stream for a named component.
pub fn stream(root: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(component_seed(root, component))
}

/// RNG stream for a named component within one epoch.
pub fn epoch_stream(root: u64, component: &str, epoch: usize) -> ChaCha8Rng {
    let mixed = component_seed(root, component) ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(mixed)
}

//! Deterministic RNG stream derivation.
//!
//! Sweeps run many independent sessions; each gets its own ChaCha stream
//! derived from `(master seed, domain label, two indices)`. Streams are stable
//! across platforms and independent of execution order, which is what makes
//! parallel sweeps byte-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a, used to fold domain labels into seed material. Not for security;
/// only has to be deterministic across platforms.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives an independent ChaCha stream from a master seed, a domain label,
/// and two indices (e.g. sentence and trial).
pub fn derive_stream(master_seed: u64, domain: &str, a: u64, b: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&fnv1a(domain.as_bytes()).to_le_bytes());
    seed[16..24].copy_from_slice(&a.to_le_bytes());
    seed[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

/// Single-index convenience over [`derive_stream`].
pub fn seeded(master_seed: u64, domain: &str) -> ChaCha12Rng {
    derive_stream(master_seed, domain, 0, 0)
}

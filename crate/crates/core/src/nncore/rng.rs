//! Seeded random streams.
//!
//! Every source of randomness in the crate is a ChaCha8 stream keyed by
//! `SHA-256(seed_le_bytes || label_utf8)`. Distinct labels therefore give
//! independent streams from one 64-bit seed, and the derivation is stable
//! across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The 32-byte stream key for `(seed, label)`.
pub fn derive_seed_bytes(seed: u64, stream_label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stream_label.as_bytes());
    hasher.finalize().into()
}

/// A derived 64-bit seed: the first eight key bytes, little-endian.
pub fn derive_u64(seed: u64, stream_label: &str) -> u64 {
    let bytes = derive_seed_bytes(seed, stream_label);
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}

/// Deterministic generator for `(seed, label)`. Identical arguments yield
/// an identical stream; distinct labels yield independent streams.
pub fn seeded_rng(seed: u64, stream_label: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed_bytes(seed, stream_label))
}

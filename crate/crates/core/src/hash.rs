//! FNV-1a 64-bit hash.
//!
//! Used wherever a stable, published hash is required: feature bucketing in
//! the encoder and bucket routing in the serving layer. Pinned here rather
//! than taken from `std` so hashes never change across Rust releases.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over a byte slice.
#[inline]
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

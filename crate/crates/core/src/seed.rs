//! Deterministic seed derivation.
//!
//! Every stage of a run (vocabulary shuffling, model init, per-epoch
//! shuffles, negative draws, per-question inference) derives its own RNG
//! seed from one top-level seed plus a stage label, so a single `--seed`
//! reproduces an entire run without stages aliasing each other's streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derive a stage seed from a master seed and a label.
///
/// The mapping is fixed; changing it would silently break run
/// reproducibility, so treat it as part of the on-disk contract.
pub fn derive(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the master seed, then a
    // splitmix64 finalizer to spread low-entropy labels.
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// Convenience for `derive` with a numeric suffix (epochs, workers, trials).
pub fn derive_indexed(seed: u64, label: &str, index: u64) -> u64 {
    derive(seed, label).wrapping_add(splitmix64(index.wrapping_add(1)))
}

/// Portable, reproducible RNG used everywhere randomness is needed.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

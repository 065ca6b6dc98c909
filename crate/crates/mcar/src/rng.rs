//! Deterministic substream derivation for parallel Monte-Carlo work.
//!
//! Streams are ChaCha8 generators keyed by a SplitMix64 hash of
//! `(seed, lane, replicate)`, so any replicate can be regenerated in
//! isolation and results do not depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser; decorrelates consecutive counters.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A counter-based generator for `(seed, lane, replicate)`.
///
/// `lane` distinguishes independent uses at the same level (e.g. pattern
/// index), `replicate` the Monte-Carlo repetition or bootstrap index.
pub fn substream(seed: u64, lane: u64, replicate: u64) -> ChaCha8Rng {
    let k = mix(seed ^ mix(lane.wrapping_mul(0x9e37_79b9_0000_0001) ^ mix(replicate)));
    ChaCha8Rng::seed_from_u64(k)
}

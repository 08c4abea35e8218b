//! Seed derivation for independent random substreams.
//!
//! Every trial, candidate or step gets its own ChaCha8 stream keyed by
//! `substream(base, index, tag)`, so results never depend on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_CLEAN: u64 = 0;
pub(crate) const TAG_BACKDOORED: u64 = 1;
pub(crate) const TAG_SEARCH: u64 = 2;
pub(crate) const TAG_TRAJECTORY: u64 = 3;
pub(crate) const TAG_SYNTHETIC: u64 = 4;
pub(crate) const TAG_WEIGHTS: u64 = 5;
pub(crate) const TAG_MOMENTS: u64 = 6;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive(base: u64, index: u64, tag: u64) -> u64 {
    mix(mix(mix(base) ^ index) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub(crate) fn substream(base: u64, index: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, index, tag))
}

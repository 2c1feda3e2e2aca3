//! Seed derivation for independent random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream keyed by a user
//! seed plus a list of tags (purpose constant, epoch, step, ...). Streams
//! are addressable: batch k of epoch e can be regenerated without replaying
//! anything that came before it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Purpose tags. Values are arbitrary but must never change once data or
// checkpoints produced with them exist.
pub(crate) const T_PROTOTYPES: u64 = 0x11;
pub(crate) const T_SAMPLES: u64 = 0x12;
pub(crate) const T_MAP_A: u64 = 0x13;
pub(crate) const T_MAP_B: u64 = 0x14;
pub(crate) const T_SUBSET: u64 = 0x15;
pub(crate) const T_SPLIT: u64 = 0x16;
pub(crate) const T_EPOCH_ORDER: u64 = 0x21;
pub(crate) const T_STEP: u64 = 0x22;
pub(crate) const T_ENCODER_A: u64 = 0x31;
pub(crate) const T_ENCODER_B: u64 = 0x32;
pub(crate) const T_HEAD: u64 = 0x33;
pub(crate) const T_CLS_ORDER: u64 = 0x34;
pub(crate) const T_CORRUPT: u64 = 0x41;
pub(crate) const T_PROXY: u64 = 0x42;
pub(crate) const T_FRACTION: u64 = 0x43;
pub(crate) const T_DATA: u64 = 0x52;
pub(crate) const T_TRAIN: u64 = 0x53;
pub(crate) const T_SAMPLER: u64 = 0x54;
pub(crate) const T_EVAL_LINEAR: u64 = 0x55;
pub(crate) const T_EVAL_FINETUNE: u64 = 0x56;
pub(crate) const T_SUPERVISED: u64 = 0x57;
pub(crate) const T_PL: u64 = 0x58;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of tags into a new 64-bit seed.
pub(crate) fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &tag in tags {
        state = splitmix64(state ^ tag);
    }
    state
}

/// A fresh stream for the given seed and tag path.
pub(crate) fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

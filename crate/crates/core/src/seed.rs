//! Deterministic seed derivation.
//!
//! Every stochastic operation in the crate takes an explicit generator. A run
//! is driven by one master seed; child seeds for repetitions and independent
//! streams (initialization, shuffling, sampling) are derived by hashing the
//! parent seed with a stream tag, so adding a new stream never perturbs the
//! existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and a textual stream tag.
pub fn derive(parent: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then mixed with the parent.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(parent ^ splitmix64(h))
}

/// Seed for repetition `rep` of a run driven by `master`.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    splitmix64(derive(master, "repetition") ^ splitmix64(rep as u64))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(parent: u64, tag: &str) -> Rng {
    rng(derive(parent, tag))
}

//! Deterministic RNG streams.
//!
//! Every random choice in the toolkit draws from a ChaCha stream derived
//! from a `u64` seed, so a whole experiment replays bit-for-bit from
//! `(config, master seed)`. Independent sub-tasks (trees of a forest,
//! rows of an explanation, repeats of a run) get independent streams via
//! [`stream`] or derived seeds via [`derive`].

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// ChaCha stream `index` of the generator seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mix `seed` and `salt` into a new seed (splitmix64 finalizer).
pub fn derive(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Deterministic seed derivation.
//!
//! Every random stream in the simulator (channel links, FoV draws, episode
//! parameters, policy sampling) is keyed by a tuple of integers so that any
//! piece can be regenerated independently of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the different random processes disjoint for equal indices.
pub(crate) const TAG_CHANNEL: u64 = 0x4348_414e; // "CHAN"
pub(crate) const TAG_FOV: u64 = 0x464f_5653; // "FOVS"
pub(crate) const TAG_EPISODE: u64 = 0x4550_4953; // "EPIS"
pub(crate) const TAG_POLICY: u64 = 0x504f_4c49; // "POLI"

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds an ordered tuple of integers into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

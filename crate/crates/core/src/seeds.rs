//! Deterministic seed derivation.
//!
//! Every random stream in an experiment is derived from one master seed plus
//! a path of integer labels, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels for the top-level consumers of a master seed.
pub mod stream {
    pub const MODEL: u64 = 0x6d6f_6465_6c00;
    pub const PHI: u64 = 0x7068_6900;
    pub const MONTE_CARLO: u64 = 0x6d63_0000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `labels` into `base`; distinct label paths give unrelated seeds.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// Seed of measurement matrix draw `draw`. Matrices with different row
/// counts drawn from the same seed share their leading rows.
pub fn phi_seed(base: u64, draw: u64) -> u64 {
    derive_seed(base, &[stream::PHI, draw])
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

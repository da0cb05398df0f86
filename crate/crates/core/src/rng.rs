//! Seeded random streams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` whose seed is
//! derived from a base seed and a path of stream tags, so that independent
//! tasks (trajectories, restarts, trials) never share a generator and results
//! do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `seed` and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A generator for the substream identified by `tags`.
pub fn substream(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Stream tags used across modules, kept in one place to avoid collisions.
pub mod tags {
    pub const STRUCTURE: u64 = 1;
    pub const OVERLAP: u64 = 2;
    pub const DECODER: u64 = 3;
    pub const LATENT: u64 = 4;
    pub const OBSERVED: u64 = 5;
    pub const GRAM_SAMPLES: u64 = 6;
    pub const CLUSTER: u64 = 7;
    pub const BASELINE: u64 = 8;
    pub const TRANSITIONS: u64 = 9;
    pub const PROBES: u64 = 10;
    pub const STABILITY: u64 = 11;
    pub const GENERALIZATION: u64 = 12;
    pub const BIAS: u64 = 13;
    pub const THEORY: u64 = 14;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, &[1, 2]).random();
        let b: u64 = substream(7, &[1, 2]).random();
        let c: u64 = substream(7, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

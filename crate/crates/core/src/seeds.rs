//! Seed derivation.
//!
//! Every stochastic stage draws from its own ChaCha8 stream whose seed is
//! derived from a master seed and a stage tag with the splitmix64 finalizer:
//! `derive(master, tag) = splitmix64(master ^ splitmix64(tag))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Master seed of sweep repeat `r`: repeat 0 keeps the master seed.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        derive(master, stage::REPEAT_BASE + r as u64)
    }
}

/// Stage tags for the experiment pipeline.
pub mod stage {
    pub const DATA: u64 = 1;
    pub const UNSEEN: u64 = 2;
    pub const FOREST: u64 = 3;
    pub const PLSA: u64 = 4;
    pub const PAIRS: u64 = 5;
    pub const REPEAT_BASE: u64 = 1 << 32;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference splitmix64 generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(derive(7, 1), derive(7, 2));
        assert_ne!(derive(7, 1), derive(8, 1));
    }
}

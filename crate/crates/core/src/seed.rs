//! Counter-based derivation of sub-seeds from one root seed.
//!
//! A sub-seed depends only on `(root, label, index)`, so adding a new
//! consumer never shifts the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(fnv1a(label) ^ splitmix64(index)))
}

pub fn rng_for(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "shuffle", 0), derive_seed(7, "shuffle", 0));
        assert_ne!(derive_seed(7, "shuffle", 0), derive_seed(7, "shuffle", 1));
        assert_ne!(derive_seed(7, "shuffle", 0), derive_seed(7, "dropout", 0));
        assert_ne!(derive_seed(7, "shuffle", 0), derive_seed(8, "shuffle", 0));
    }
}

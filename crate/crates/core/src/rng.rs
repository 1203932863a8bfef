//! Deterministic randomness.
//!
//! Every stochastic stage (scene synthesis, split shuffling, augmentation,
//! weight init, dropout) draws from a [`ChaCha8Rng`] seeded through
//! [`derive_seed`], so a run is a pure function of the master seed and the
//! stage labels. Labels keep streams independent: reordering or skipping one
//! stage never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from a master seed, a stage label and an index.
///
/// The derivation hashes `(master, label, index)` so distinct labels or
/// indices give statistically independent streams, and the same triple always
/// gives the same seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update([0xff]); // domain separator between seed and label bytes
    h.update(label.as_bytes());
    h.update([0xff]);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields >= 8 bytes"))
}

/// Build the stream cipher RNG used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Convenience: derive and seed in one step.
pub fn derived_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(master, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        let a = derive_seed(7, "camera", 3);
        let b = derive_seed(7, "camera", 3);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(7, "camera", 4));
        assert_ne!(a, derive_seed(7, "video", 3));
        assert_ne!(a, derive_seed(8, "camera", 3));
    }

    #[test]
    fn label_index_boundary_is_unambiguous() {
        // ("ab", 1) must not collide with ("a", ...) via byte concatenation.
        assert_ne!(derive_seed(0, "ab", 0), derive_seed(0, "a", 0x62));
    }

    #[test]
    fn streams_reproduce() {
        let mut r1 = derived_rng(42, "init", 0);
        let mut r2 = derived_rng(42, "init", 0);
        let xs: Vec<u32> = (0..8).map(|_| r1.random()).collect();
        let ys: Vec<u32> = (0..8).map(|_| r2.random()).collect();
        assert_eq!(xs, ys);
    }
}

//! Seed derivation for reproducible, independently-seeded stages.
//!
//! A stage seed is the first 8 bytes (little-endian) of
//! `SHA-256(master_le64 || risk_level_le32 || run_le32 || tag_utf8)`.
//! Adding sweep points or stages never changes the seed of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(master: u64, risk_level: u32, run: u32, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(risk_level.to_le_bytes());
    hasher.update(run.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a labeled substream of `master`.
pub fn substream(master: u64, risk_level: u32, run: u32, tag: &str) -> Rng {
    rng_from_seed(derive_seed(master, risk_level, run, tag))
}

/// Hex SHA-256 of arbitrary bytes, used to fingerprint configs and manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derivation_is_stable_and_separates_inputs() {
        let a = derive_seed(7, 3, 1, "train");
        assert_eq!(a, derive_seed(7, 3, 1, "train"));
        assert_ne!(a, derive_seed(7, 3, 1, "val"));
        assert_ne!(a, derive_seed(7, 4, 1, "train"));
        assert_ne!(a, derive_seed(7, 3, 2, "train"));
        assert_ne!(a, derive_seed(8, 3, 1, "train"));
    }

    #[test]
    fn substreams_are_reproducible() {
        let x: Vec<u64> = substream(1, 0, 0, "a").random_iter().take(4).collect();
        let y: Vec<u64> = substream(1, 0, 0, "a").random_iter().take(4).collect();
        assert_eq!(x, y);
    }

    #[test]
    fn sha_hex_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

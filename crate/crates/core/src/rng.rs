//! Seeded random streams.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`]. A pipeline run
//! starts from one root seed and derives an independent named stream per stage,
//! so reordering or skipping one stage never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Seeded generator for tests and one-off use.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream keyed by `(root, label)`.
pub fn substream(root: u64, label: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

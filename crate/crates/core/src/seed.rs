//! Counter-based seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from the
//! master seed and a path of stream ids, so results never depend on the
//! order in which independent units run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with a path of stream ids into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &id| splitmix64(acc ^ splitmix64(id)))
}

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags, kept in one place so no two subsystems share a stream.
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const BASE: u64 = 2;
    pub const SUBJECT: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const FOLDS: u64 = 5;
    pub const REPLICATION: u64 = 6;
    pub const BASELINE: u64 = 7;
}

//! Counter-based seed derivation.
//!
//! Every stochastic step draws its generator from `(master, path...)` so the
//! stream a task sees does not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mix a master seed with a path of counters into a child seed.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, path: &[u64]) -> Rng {
    rng(derive(master, path))
}

/// Stage labels used as the first path component.
pub mod stage {
    pub const SPLIT: u64 = 1;
    pub const SKETCH: u64 = 2;
    pub const CLUSTER: u64 = 3;
    pub const DICT: u64 = 4;
    pub const ROUND: u64 = 5;
    pub const FOREST: u64 = 6;
    pub const NEGATIVES: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const REPEAT: u64 = 9;
    pub const SYNTHETIC: u64 = 10;
}

//! Seedable random streams.
//!
//! Every random quantity in a run is drawn from a ChaCha8 stream addressed by
//! a key path. The run seed and the path components (round, purpose, ...) are
//! folded through SplitMix64 into the 64-bit generator seed, and the final
//! draw index selects the ChaCha stream id. Because ChaCha is counter based,
//! the stream for draw `i` can be created independently of the others, which
//! keeps parallel simulation reproducible regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags used as the second component of a key path.
pub mod purpose {
    pub const PRIOR: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const PROPOSE: u64 = 3;
    pub const FIT: u64 = 4;
    pub const REPLACE: u64 = 5;
    pub const OBSERVE: u64 = 6;
    pub const REFERENCE: u64 = 7;
    pub const METRIC: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit key from a seed and a path.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// A generator seeded directly from `seed`.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// The stream for draw `index` below `seed / path`.
pub fn substream(seed: u64, path: &[u64], index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(derive_key(seed, path));
    rng.set_stream(index);
    rng
}

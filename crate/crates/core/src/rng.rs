//! Seeded random streams.
//!
//! Every consumer of randomness asks for its own stream, keyed by a purpose
//! tag and an index, so changing one experimental factor (say, the row drop)
//! never perturbs the draws of another (the X sample).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for [`stream`].
pub mod purpose {
    pub const X_DRAW: u64 = 1;
    pub const RELATION_NOISE: u64 = 2;
    pub const Y_EXTRA: u64 = 3;
    pub const DROP: u64 = 4;
    pub const SHUFFLE_X: u64 = 5;
    pub const SHUFFLE_Y: u64 = 6;
    pub const RESTART: u64 = 7;
    pub const CENTERS: u64 = 8;
    pub const BENCH: u64 = 9;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent deterministic stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(purpose)));
    rng.set_stream(index);
    rng
}

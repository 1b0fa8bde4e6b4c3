//! Seeded random streams. Every replica draws from its own ChaCha8 stream
//! derived from a master seed, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn master_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the family labelled `tag` under `seed`.
pub fn stream_rng(seed: u64, tag: u32, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 40) ^ index);
    rng
}

pub fn replica_rng(seed: u64, replica: u64) -> SimRng {
    stream_rng(seed, 0, replica)
}

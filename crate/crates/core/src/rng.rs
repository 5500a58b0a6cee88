//! Seed derivation. Every random stream in a run is derived from the run seed
//! plus a (stream, counter) pair, so no generator state has to be checkpointed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Trajectory = 1,
    InitialPoint = 2,
    Agent = 3,
    Replay = 4,
    WindowInit = 5,
    Dictionary = 6,
    Regret = 7,
    Reservoir = 8,
    /// Network weight initialisation.
    Init = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed for `(seed, stream, counter)`.
pub fn derive_seed(seed: u64, stream: Stream, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream as u64) ^ counter)
}

pub fn stream_rng(seed: u64, stream: Stream, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, counter))
}

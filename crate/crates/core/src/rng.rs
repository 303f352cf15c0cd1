//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed
//! by a hash of the run seed, a stream tag and an index, so streams never
//! overlap and any component can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent random streams used by one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Network = 1,
    Codebook = 2,
    Messages = 3,
    Noise = 4,
    Aloha = 5,
    Csma = 6,
    Trial = 7,
    Receivers = 8,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ (stream as u64).rotate_left(56)) ^ index)
}

pub fn stream_rng(base: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, stream, index))
}

/// Seed for one trial of a sweep: the base seed XOR the trial index, hashed.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ trial)
}

//! Keyed random streams.
//!
//! Every stochastic draw in training and evaluation comes from a stream keyed
//! by the global seed plus a tuple of indices, so results do not depend on
//! iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes. Mixed into the key so two purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Init = 2,
    Shuffle = 3,
    Dropout = 4,
    Encode = 5,
    Validate = 6,
    Evaluate = 7,
    Embeddings = 8,
    Synthetic = 9,
    GradCheck = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_key(seed: u64, purpose: Purpose, indices: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x5350_494B_4554_5854);
    h = splitmix64(h ^ purpose as u64);
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

pub fn stream(seed: u64, purpose: Purpose, indices: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, purpose, indices))
}

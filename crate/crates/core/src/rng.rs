//! Seed derivation and random streams.
//!
//! Every stochastic stage (initialisation, dropout, augmentation, shuffling,
//! synthesis) draws from its own ChaCha8 stream. A stream is identified by a
//! root seed plus a path of integers; the path is folded into a 64-bit key
//! with the SplitMix64 finaliser, so sibling streams are independent and a
//! stream's output never depends on how many numbers another stream consumed.
//! ChaCha is counter based, which makes each stream reproducible on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used as the first path element.
pub mod tag {
    pub const INIT: u64 = 0x1;
    pub const DROPOUT: u64 = 0x2;
    pub const AUGMENT: u64 = 0x3;
    pub const SHUFFLE: u64 = 0x4;
    pub const SYNTH: u64 = 0x5;
    pub const SPLIT: u64 = 0x6;
    pub const FOLD: u64 = 0x7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `root`, producing a child seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(root: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, path))
}

/// FNV-1a hash of a string, for turning identities into path elements.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

//! Seed derivation and the generator used everywhere.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded through
//! `seed_from_u64`. ChaCha output is specified bit for bit, so runs are
//! reproducible across platforms. Per-repetition seeds are `base_seed + rep`,
//! mixed with a stream tag through SplitMix64 so the X-sample, Y-sample,
//! network initialization, shuffling and evaluation streams never coincide.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    SourceSample,
    TargetSample,
    Init,
    Shuffle,
    Eval,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::SourceSample => 0x78, // 'x'
            Stream::TargetSample => 0x79, // 'y'
            Stream::Init => 0x69,
            Stream::Shuffle => 0x73,
            Stream::Eval => 0x65,
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base_seed: u64, rep: usize, stream: Stream) -> u64 {
    let rep_seed = base_seed.wrapping_add(rep as u64);
    splitmix64(splitmix64(rep_seed) ^ stream.tag())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

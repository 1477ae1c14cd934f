//! Splittable seeding.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a 64-bit value that is
//! derived from a parent seed and a tag. Replication `r` of a scenario draws
//! from `derive(derive(master, SAMPLING), r)` no matter which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const POPULATION: u64 = 0x706f_7075;
pub const SAMPLING: u64 = 0x7361_6d70;
pub const RESPONSE: u64 = 0x7265_7370;
pub const FOLDS: u64 = 0x666f_6c64;
pub const FIT: u64 = 0x6669_7421;
pub const BOOTSTRAP: u64 = 0x626f_6f74;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `tag` under `parent`.
pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(tag.rotate_left(17) ^ 0x5851_f42d_4c95_7f2d))
}

/// Child seed along a path of tags.
pub fn derive_path(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |s, &t| derive(s, t))
}

/// Stable tag for a name, so seeds follow names rather than list positions.
pub fn tag_of(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

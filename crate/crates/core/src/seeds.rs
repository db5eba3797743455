//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every stream is identified by a parent seed, a tag naming its purpose, and
//! an index. Streams never share state, so the order in which runs or agents
//! are evaluated does not change any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_NETWORK: u64 = 0x6e65_7477_6f72_6b00;
pub const TAG_RELIABILITY: u64 = 0x7a65_7461_0000_0000;
pub const TAG_RECEPTIVITY: u64 = 0x7265_6365_7074_0000;
pub const TAG_RUN: u64 = 0x7275_6e00_0000_0000;
pub const TAG_STEP: u64 = 0x7374_6570_0000_0000;
pub const TAG_AGENT: u64 = 0x6167_656e_7400_0000;
pub const TAG_PARAMETERS: u64 = 0x7061_7261_6d73_0000;
pub const TAG_RECORDS: u64 = 0x7265_636f_7264_0000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(parent, tag, index)`.
pub fn derive(parent: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ tag) ^ index)
}

pub fn stream(parent: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parent, tag, index))
}

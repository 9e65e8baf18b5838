//! Reproducible random streams keyed by tree position.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream key of a root node.
pub const ROOT_KEY: u64 = 0x243f_6a88_85a3_08d3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of a child given its parent's key and side.
pub fn child_key(parent: u64, right: bool) -> u64 {
    splitmix64(parent ^ if right { 0xa5a5_a5a5_a5a5_a5a5 } else { 0x5a5a_5a5a_5a5a_5a5a })
}

/// Independent generator for the node identified by `key` under `seed`.
pub fn stream(seed: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

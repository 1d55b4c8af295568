//! Named random streams derived from one master seed.
//!
//! Every consumer (data, test data, features, splits, noise) draws from its
//! own ChaCha20 stream, so adding features never perturbs the data draws and
//! vice versa. Streams are addressed by a name plus an integer key.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const DATA: &str = "data";
pub const TEST: &str = "test";
pub const FEATURES: &str = "features";
pub const SPLITS: &str = "splits";
pub const NOISE: &str = "noise";

/// FNV-1a over the name, then mixed with the key through splitmix64.
fn stream_id(name: &str, key: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(key))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(master, name, key)`.
pub fn stream(master: u64, name: &str, key: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(stream_id(name, key));
    rng
}

/// Derives a child seed, e.g. one per experiment repeat.
pub fn child_seed(master: u64, name: &str, key: u64) -> u64 {
    splitmix64(master ^ stream_id(name, key))
}

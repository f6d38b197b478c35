//! Deterministic seed derivation.
//!
//! Every stochastic component draws from its own stream derived from one
//! root seed and a stable label, so adding a consumer never perturbs the
//! draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Seed for the stream `label` under `root`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finaliser mixed with the root.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(root ^ splitmix(h))
}

pub fn stream(root: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, label))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

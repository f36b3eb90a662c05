use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes; each (seed, frame, purpose) triple owns an independent generator.
pub mod purpose {
    pub const OBJECT_COUNT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const NOISE: u64 = 16;
    pub const CLUTTER: u64 = 32;
    pub const OBJECT: u64 = 1 << 20;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one keyed stream, independent of how many other streams were drawn.
pub fn keyed_rng(seed: u64, frame: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix(seed);
    for (i, word) in [frame, purpose, 0x474c_4131].into_iter().enumerate() {
        h = splitmix(h ^ word);
        key[i * 8..i * 8 + 8].copy_from_slice(&h.to_le_bytes());
    }
    key[24..].copy_from_slice(&splitmix(h).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

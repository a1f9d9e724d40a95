//! One root seed, expanded into independent per-purpose streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Init,
    Shuffle,
    Dropout,
    Split,
    Sampling,
    EvalSampling,
    Synthetic,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 0x1111,
            Purpose::Shuffle => 0x2222,
            Purpose::Dropout => 0x3333,
            Purpose::Split => 0x4444,
            Purpose::Sampling => 0x5555,
            Purpose::EvalSampling => 0x6666,
            Purpose::Synthetic => 0x7777,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, purpose: Purpose) -> u64 {
    splitmix64(root ^ splitmix64(purpose.tag()))
}

pub fn rng_for(root: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, purpose))
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random stream: ChaCha with 8 rounds, seeded
/// from a 64-bit value via `SeedableRng::seed_from_u64`.
pub type SeedRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `master` and a path of tags.
///
/// Each tag is folded in with one splitmix64 step, so
/// `derive_seed(m, &[a, b])` differs from `derive_seed(m, &[b, a])`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

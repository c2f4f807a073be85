//! Seed derivation for reproducible, isolated random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate. Its state is serializable, which the
/// online EM checkpoints rely on.
pub type SimRng = ChaCha8Rng;

const DATA_STREAM: u64 = 0;
const ESTIMATION_STREAM: u64 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `(a, b)` substream of `master`.
pub fn substream(master: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ a) ^ b.rotate_left(32))
}

/// Generator for simulating data from `seed`.
pub fn data_rng(seed: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    rng
}

/// Generator for estimation replicate `replicate`: seeded with
/// `seed + replicate` on a stream disjoint from [`data_rng`].
pub fn replicate_rng(seed: u64, replicate: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(replicate));
    rng.set_stream(ESTIMATION_STREAM);
    rng
}

//! Seed derivation and counter-addressed random substreams.
//!
//! Every stochastic routine in the crate draws from `substream(master, i)`
//! where `i` is a stable index (simulation number, RR-set index, ...), so
//! results do not depend on how work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent generator number `stream` under `master`.
pub fn substream(master: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Master seed for a named sub-purpose (e.g. the second RR collection).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    mix64(mix64(master) ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) fully determined by `(key, a, b, c)`. Used for coins
/// that must be identical across repeated evaluations (common random numbers).
#[inline]
pub fn hashed_unit(key: u64, a: u64, b: u64, c: u64) -> f64 {
    let h = mix64(mix64(mix64(key ^ a) ^ b) ^ c);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn next_u64(rng: &mut Rng) -> u64 {
    rng.next_u64()
}

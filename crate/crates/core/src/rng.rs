//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose key is
//! derived from `(experiment seed, purpose tag, indices)`. Two streams with
//! different keys are independent, and the value a stream produces never
//! depends on which thread asked for it or in which order, so parallel
//! ensemble runs are bit-identical to sequential ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from a parent seed, a purpose tag and a path of indices.
pub fn derive_seed(seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(fnv1a(tag)));
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(GOLDEN)));
    }
    h
}

/// A stream keyed by `(seed, tag, indices)`.
pub fn stream(seed: u64, tag: &str, indices: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, indices))
}

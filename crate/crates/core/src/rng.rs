//! Seed derivation. Every random quantity in the crate is drawn from a
//! ChaCha8 stream keyed by a 64-bit seed plus a stream id, so work items can
//! be evaluated in any order (or concurrently) and still see the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, tag, index)`. Tags separate unrelated uses of the
/// same parent seed (for example per-iteration projections vs. minibatches).
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(tag)).wrapping_add(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = substream(1, 0).random();
        let b: u64 = substream(1, 1).random();
        let a2: u64 = substream(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn derived_seeds_differ_by_tag_and_index() {
        assert_ne!(derive_seed(5, 0, 0), derive_seed(5, 1, 0));
        assert_ne!(derive_seed(5, 0, 0), derive_seed(5, 0, 1));
        assert_eq!(derive_seed(5, 2, 3), derive_seed(5, 2, 3));
    }
}

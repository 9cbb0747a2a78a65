//! Deterministic seed derivation.
//!
//! Every stochastic routine in the crate takes a 64-bit seed (or an `&mut
//! ChaCha12Rng` already derived from one). Parallel loops never share one RNG:
//! each work item derives its own stream from the master seed and the item
//! index, so results are identical regardless of worker count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step: the standard 64-bit finalizer used to decorrelate
/// seed+index pairs before seeding a stream cipher RNG.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a stream label (row index, tree index, replica
/// index, ...) into an independent 64-bit seed.
#[inline]
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    // Two finalizer rounds over (master, stream) — enough to break the linear
    // structure of consecutive indices.
    splitmix64(splitmix64(master ^ 0x6a09_e667_f3bc_c909).wrapping_add(stream))
}

/// RNG for a derived stream. `ChaCha12` is counter-based: cheap to construct
/// per work item and statistically independent across derived seeds.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, stream))
}

/// RNG seeded directly from a master seed (single-stream use).
pub fn master_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_differ_and_are_stable() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        let c = derive_seed(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // Stable across calls (pure function).
        assert_eq!(a, derive_seed(7, 0));
    }

    #[test]
    fn stream_rng_reproduces() {
        let x: f64 = stream_rng(123, 5).random();
        let y: f64 = stream_rng(123, 5).random();
        assert_eq!(x, y);
    }
}

//! Deterministic seed derivation and RNG construction.
//!
//! All randomness in the crate flows through ChaCha8 streams created from
//! explicit seeds, so any run is reproducible from its master seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splitmix64 finalizer, used to decorrelate derived seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a stream index.
///
/// Distinct `(master, stream)` pairs map to decorrelated seeds, so per-sample
/// work can be parallelized or reordered without changing any output.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_add(0x517c_c1b7_2722_0a95)))
}

/// A ChaCha8 RNG seeded from a single u64.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_deterministic_and_distinct() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        let c = derive_seed(8, 0);
        assert_eq!(a, derive_seed(7, 0));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut r1 = rng_from_seed(derive_seed(42, 3));
        let mut r2 = rng_from_seed(derive_seed(42, 3));
        for _ in 0..16 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
    }
}

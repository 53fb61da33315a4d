//! Stable 64-bit seed derivation.
//!
//! Every random number in a run is a pure function of the base seed and a
//! chain of integer keys (scale `L`, realization index, disorder coordinate),
//! so results never depend on scheduling or worker count.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a key into a seed. Not commutative: `mix(a, b) != mix(b, a)` in general.
pub fn mix(seed: u64, key: u64) -> u64 {
    finalize(finalize(seed.wrapping_add(GOLDEN)) ^ key.wrapping_mul(GOLDEN).rotate_left(17))
}

/// Seed for one value of the system-size parameter `L`.
pub fn level_seed(base_seed: u64, scale: u64) -> u64 {
    mix(base_seed, scale)
}

/// Seed of one disorder realization.
pub fn realization_seed(base_seed: u64, realization: u64) -> u64 {
    mix(base_seed, realization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn mix_is_stable() {
        // frozen: any change here silently changes every sampled disorder
        assert_eq!(mix(0, 0), 0x4821_8226_ff3c_d4bf);
        assert_eq!(mix(7, 3), 0xb315_fa49_03b8_9261);
        assert_ne!(mix(1, 2), mix(2, 1));
        assert_ne!(mix(7, 0), mix(7, 1));
    }

    #[test]
    fn no_collisions_on_small_grid() {
        let mut seen = HashSet::new();
        for s in 0..64 {
            for k in 0..256 {
                assert!(seen.insert(mix(s, k)));
            }
        }
    }
}

//! Deterministic seed derivation.
//!
//! A campaign is identified by one `base_seed`. Run `i` gets
//! `run_seed = mix(base_seed + i * GOLDEN)`; every noise stream of that run is
//! then `mix(run_seed ^ tag)` for a fixed per-stream tag. `mix` is the
//! SplitMix64 finalizer, which is a bijection on `u64`, and `i -> base + i *
//! GOLDEN` is injective modulo 2^64 because `GOLDEN` is odd, so run seeds never
//! collide within a campaign.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags. Changing any of these changes every campaign's output.
pub const TAG_PROCESS: u64 = 0x7072_6f63_6573_7331; // "process1"
pub const TAG_MEASUREMENT: u64 = 0x6d65_6173_7572_6531;
pub const TAG_DEMAND: u64 = 0x6465_6d61_6e64_2131;
pub const TAG_WATERMARK: u64 = 0x7761_7465_726d_6b31;
pub const TAG_CALIBRATION: u64 = 0x6361_6c69_6272_6174;

pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(base_seed: u64, run_index: u64) -> u64 {
    mix(base_seed.wrapping_add(run_index.wrapping_mul(GOLDEN)))
}

pub fn stream_seed(run_seed: u64, tag: u64) -> u64 {
    mix(run_seed ^ tag)
}

/// Base seed of the clean calibration campaign paired with `base_seed`.
pub fn calibration_base(base_seed: u64) -> u64 {
    mix(base_seed ^ TAG_CALIBRATION)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeds for the plant-side noise streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedSet {
    pub process: u64,
    pub measurement: u64,
    pub demand: u64,
}

impl SeedSet {
    pub fn from_run_seed(run_seed: u64) -> Self {
        Self {
            process: stream_seed(run_seed, TAG_PROCESS),
            measurement: stream_seed(run_seed, TAG_MEASUREMENT),
            demand: stream_seed(run_seed, TAG_DEMAND),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn run_seeds_are_injective_over_a_million_runs() {
        let base = 0xDEAD_BEEF;
        let seen: HashSet<u64> = (0..1_000_000).map(|i| run_seed(base, i)).collect();
        assert_eq!(seen.len(), 1_000_000);
    }

    #[test]
    fn stream_seeds_differ_per_tag() {
        let s = SeedSet::from_run_seed(run_seed(7, 3));
        assert_ne!(s.process, s.measurement);
        assert_ne!(s.measurement, s.demand);
        assert_ne!(stream_seed(11, TAG_WATERMARK), s.process);
    }

    #[test]
    fn mix_is_stable() {
        // frozen: any change here silently re-seeds every campaign
        assert_eq!(mix(0), 0);
        assert_eq!(run_seed(0, 0), 0);
        assert_ne!(run_seed(0, 1), run_seed(1, 0));
    }
}

//! Seed derivation.
//!
//! Every random choice in the crate is driven by a `ChaCha8Rng` seeded from a
//! 64-bit value. Values handed to independent workers (clusters, Monte Carlo
//! trials) are derived with one SplitMix64 step so any implementation can
//! reproduce them bit for bit:
//!
//! ```text
//! cluster_seed(global, id) = splitmix64(global ^ id)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn cluster_seed(global_seed: u64, cluster_id: usize) -> u64 {
    splitmix64(global_seed ^ cluster_id as u64)
}

/// Seed for trial `trial` of grid point `point` in a sweep.
pub fn trial_seed(global_seed: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(global_seed ^ point as u64) ^ trial as u64)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

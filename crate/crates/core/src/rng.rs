//! Deterministic random streams.
//!
//! Every stochastic quantity (weather noise, sensor noise, parameter seeds,
//! Monte Carlo samples) draws from its own stream keyed by `(seed, tag, index)`,
//! so values never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_WEATHER: u64 = 0x5745_4154;
pub(crate) const TAG_SENSOR: u64 = 0x5345_4e53;
pub(crate) const TAG_SEEDS: u64 = 0x5345_4544;
pub(crate) const TAG_MONTE_CARLO: u64 = 0x4d43_4d43;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for the given key.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed) ^ tag) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}

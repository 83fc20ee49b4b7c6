//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator. The key is
//! derived from the master seed and a domain tag (what the stream is used
//! for: calibration, simulation, grid point), and the ChaCha stream id is the
//! replication index. Replication `i` therefore sees the same numbers no matter
//! which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to spread structured seeds over the key space.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Domain tags separating independent uses of one master seed.
pub mod domain {
    pub const CALIBRATION: u64 = 0xCA11;
    pub const SIMULATION: u64 = 0x5111;
}

/// Mixes a domain tag with extra discriminators (e.g. a grid-point index).
pub fn domain_with(tag: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(tag), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Generator for replication `index` of the stream family `(seed, domain)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ splitmix64(domain));
    rng.set_stream(index);
    rng
}

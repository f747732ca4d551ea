//! Seeded standard-normal streams.
//!
//! Simulators take noise as any `Iterator<Item = f64>` of standard normals.
//! [`StandardNormals`] derives an independent ChaCha stream from a 64-bit
//! seed, a domain tag and a stream index, so parallel or batched consumers
//! reproduce bit-identical output regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Domain tags separating independent uses of one seed.
pub mod domain {
    pub const PATHS: u64 = 1;
    pub const LLOYD_TRAINING: u64 = 2;
    pub const DISTORTION_EVAL: u64 = 3;
    pub const CLVQ: u64 = 4;
    pub const RATE_EVAL: u64 = 5;
    pub const ORACLE: u64 = 6;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Creates the RNG for `(seed, domain, stream)`.
pub fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Infinite iterator of standard normal draws.
#[derive(Debug, Clone)]
pub struct StandardNormals {
    rng: ChaCha8Rng,
}

impl StandardNormals {
    pub fn new(seed: u64, domain: u64, stream: u64) -> Self {
        Self {
            rng: stream_rng(seed, domain, stream),
        }
    }
}

impl Iterator for StandardNormals {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(self.rng.sample(StandardNormal))
    }
}

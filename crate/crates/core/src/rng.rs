//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, position)`: a ChaCha8
//! keystream is keyed by the seed and the stream id selects an independent
//! 64-bit nonce. Paths and components therefore get disjoint streams and can
//! be simulated in any order, on any number of threads, with identical bits.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

/// Stream tag used for the per-path draw of the `xi` random variable.
pub const XI_STREAM: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a path index and a component index into a stream id.
pub fn stream_id(path: u64, component: u64) -> u64 {
    splitmix64(splitmix64(path) ^ component.rotate_left(32))
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The stream for `(path, component)` under `seed`.
    pub fn for_stream(seed: u64, path: u64, component: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(path, component));
        Self { rng }
    }

    /// Uniform draw on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inversion of the uniform stream.
    pub fn gaussian(&mut self) -> f64 {
        std_normal_inv(self.uniform())
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gaussian();
        }
    }
}

/// Quantile function of the standard normal law.
pub fn std_normal_inv(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

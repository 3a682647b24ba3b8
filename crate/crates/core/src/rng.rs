//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, counter)`, so Monte Carlo
//! sample `m` can be generated on any worker in any order and still come out
//! bit-identical.
//!
//! Construction (all arithmetic wrapping on `u64`):
//!
//! ```text
//! mix(z)       = SplitMix64 finalizer (shifts 30/27/31, multipliers
//!                0xBF58476D1CE4E5B9, 0x94D049BB133111EB)
//! key          = mix(seed ^ mix(stream * 0xD1B54A32D192ED03 + 0x8BB84B93962EACC9))
//! word(n)      = mix(key + (n + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! Uniforms take the top 53 bits of a word. Standard normals use Box-Muller on
//! words `2p` and `2p + 1`, yielding entries `2p` (cosine branch) and `2p + 1`
//! (sine branch). Transcendentals come from `libm` so results do not depend on
//! the platform math library.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{FeatureMap, GridSize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MULT: u64 = 0xD1B5_4A32_D192_ED03;
const STREAM_OFFSET: u64 = 0x8BB8_4B93_962E_ACC9;
const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// The stream `offset` positions further along, used for per-sample streams.
    pub const fn advance(self, offset: u64) -> Self {
        Self {
            seed: self.seed,
            stream: self.stream.wrapping_add(offset),
        }
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed counter generator for one [`RngSpec`].
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(spec: RngSpec) -> Self {
        let stream_key = mix64(spec.stream.wrapping_mul(STREAM_MULT).wrapping_add(STREAM_OFFSET));
        Self {
            key: mix64(spec.seed ^ stream_key),
        }
    }

    #[inline]
    pub fn word(&self, counter: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.word(counter) >> 11) as f64 * TWO_POW_NEG_53
    }

    #[inline]
    fn normal_pair(&self, pair: u64) -> (f64, f64) {
        // (0, 1] so the logarithm stays finite.
        let u1 = ((self.word(2 * pair) >> 11) + 1) as f64 * TWO_POW_NEG_53;
        let u2 = (self.word(2 * pair + 1) >> 11) as f64 * TWO_POW_NEG_53;
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(std::f64::consts::TAU * u2);
        (r * c, r * s)
    }

    /// Standard normal draw number `index`.
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        let (a, b) = self.normal_pair(index / 2);
        if index.is_multiple_of(2) {
            a
        } else {
            b
        }
    }

    /// Fills `out` with draws `0..out.len()`, identical to calling [`normal`](Self::normal)
    /// for each index.
    pub fn fill_normal(&self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        let mut pair = 0u64;
        for chunk in &mut chunks {
            let (a, b) = self.normal_pair(pair);
            chunk[0] = a;
            chunk[1] = b;
            pair += 1;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair(pair).0;
        }
    }
}

/// I.i.d. standard normal map keyed on `(seed, stream, flat index)`.
pub fn sample_gaussian(channels: usize, size: GridSize, rng: RngSpec) -> Result<FeatureMap> {
    let mut values = vec![0.0; channels * size.area()];
    CounterRng::new(rng).fill_normal(&mut values);
    FeatureMap::from_values(channels, size, values)
}

//! Seedable random streams.
//!
//! The generator is xoshiro256** (Blackman & Vigna). With state words
//! `s0..s3` one step is
//!
//! ```text
//! out = rotl(s1 * 5, 7) * 9
//! t   = s1 << 17
//! s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
//! s2 ^= t
//! s3  = rotl(s3, 45)
//! ```
//!
//! with wrapping arithmetic. A `u64` seed is expanded into the four state
//! words by four successive SplitMix64 outputs:
//!
//! ```text
//! x  += 0x9E3779B97F4A7C15
//! z   = x
//! z   = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z   = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! Uniform doubles take the top 53 bits: `(next_u64() >> 11) * 2^-53`.
//! Gaussians use the cosine branch of Box–Muller on two fresh uniforms,
//! `sqrt(-2 ln(1 - u1)) * cos(2π u2)`; no spare value is cached, so the stream
//! position is fully described by the four state words.
//!
//! Independent streams (per sample batch, per generated cell) come from
//! [`split_seed`], which hashes `seed ^ index * 0x9E3779B97F4A7C15` through one
//! SplitMix64 round.

use crate::math;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(GOLDEN);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` from a parent seed.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_mul(GOLDEN);
    splitmix64(&mut x)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut x = seed;
        let s = [
            splitmix64(&mut x),
            splitmix64(&mut x),
            splitmix64(&mut x),
            splitmix64(&mut x),
        ];
        Rng { s }
    }

    /// Stream `index` of the family rooted at `seed`.
    pub fn stream(seed: u64, index: u64) -> Self {
        Self::seed_from_u64(split_seed(seed, index))
    }

    /// Restores a generator from [`Rng::state`]. An all-zero state is a fixed
    /// point of xoshiro and is rejected.
    pub fn from_state(s: [u64; 4]) -> Option<Self> {
        if s == [0; 4] {
            None
        } else {
            Some(Rng { s })
        }
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let out = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        out
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by multiply-shift with rejection, so every
    /// value is exactly equally likely.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(1.0 - u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// In-place Fisher–Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

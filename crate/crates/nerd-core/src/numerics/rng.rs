//! Seeded, splittable random number stream.
//!
//! xoshiro256** state seeded through splitmix64. Two properties the rest of
//! the crate leans on:
//!
//! 1. same seed ⇒ bit-identical sequence, forever, on every platform;
//! 2. [`RngStream::substream`] derives a child stream from the stream's
//!    *creation seed* (not its current position), so `(index, tag)` always
//!    names the same child no matter how much the parent has been consumed.
//!    That is what makes subject-level fan-out, trial-order invariance, and
//!    resume-from-checkpoint reproducible.

use alloc::vec::Vec;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic random stream with named substreams.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    seed: u64,
    state: [u64; 4],
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        // splitmix64 expansion of the seed into the xoshiro state
        let mut s = seed;
        let mut state = [0u64; 4];
        for w in &mut state {
            s = s.wrapping_add(GOLDEN);
            *w = mix64(s);
        }
        if state.iter().all(|&w| w == 0) {
            state[0] = 1; // xoshiro must not start all-zero
        }
        RngStream { seed, state }
    }

    /// Child stream named by `(index, tag)`, derived from this stream's
    /// creation seed. Independent of the parent's current position.
    pub fn substream(&self, index: u64, tag: &str) -> Self {
        let child = mix64(self.seed ^ GOLDEN ^ mix64(index.wrapping_add(GOLDEN)) ^ fnv1a(tag.as_bytes()));
        RngStream::new(child)
    }

    /// The seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Current position, for checkpointing.
    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    /// Rebuild a stream at an exact saved position.
    pub fn restore(seed: u64, state: [u64; 4]) -> Self {
        RngStream { seed, state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        // xoshiro256**
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform_01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_01()
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    #[inline]
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        // multiply-shift; bias is O(n / 2^64), irrelevant at our scales
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw by Box-Muller (cosine branch only, no cached
    /// second value, so the stream state is the complete cursor).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform_01(); // (0, 1]
        let u2 = self.uniform_01();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Vector of standard normals.
    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = RngStream::new(1);
        let mut b = RngStream::new(2);
        let same = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn substream_ignores_parent_position() {
        let parent = RngStream::new(7);
        let mut consumed = parent.clone();
        for _ in 0..123 {
            consumed.next_u64();
        }
        let mut c1 = parent.substream(3, "train");
        let mut c2 = consumed.substream(3, "train");
        for _ in 0..100 {
            assert_eq!(c1.next_u64(), c2.next_u64());
        }
    }

    #[test]
    fn substreams_distinct_by_index_and_tag() {
        let parent = RngStream::new(7);
        let mut a = parent.substream(0, "train");
        let mut b = parent.substream(1, "train");
        let mut c = parent.substream(0, "fit");
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn restore_resumes_exactly() {
        let mut a = RngStream::new(99);
        for _ in 0..37 {
            a.next_u64();
        }
        let seed = a.seed();
        let state = a.state();
        let tail: Vec<u64> = (0..50).map(|_| a.next_u64()).collect();
        let mut b = RngStream::restore(seed, state);
        let tail2: Vec<u64> = (0..50).map(|_| b.next_u64()).collect();
        assert_eq!(tail, tail2);
    }

    #[test]
    fn uniform_01_in_range() {
        let mut r = RngStream::new(5);
        for _ in 0..10_000 {
            let u = r.uniform_01();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        // 1e5 draws: mean within 3 SE of 0, variance within 3 SE of 1
        let mut r = RngStream::new(2024);
        let n = 100_000;
        let xs = r.normal_vec(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = 1.0 / (n as f64).sqrt();
        let se_var = (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * se_var, "var {var}");
    }

    #[test]
    fn uniform_usize_covers_range() {
        let mut r = RngStream::new(11);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[r.uniform_usize(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}

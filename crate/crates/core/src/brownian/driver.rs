//! Seekable Gaussian noise with dyadic bridge refinement.
//!
//! Coarse step `k` of length `dt0` is fixed by the Gauss stream at word
//! position `4k`. Refining to level `L` fills in `2^L − 1` bridge midpoints
//! from the Bridge stream at a position that depends only on `k` and the
//! midpoint, so a run at `dt0/2` passes through exactly the coarse path.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::rng::{Lane, StreamKey};

pub const MAX_LEVEL: u32 = 4;
const WORDS_PER_PAIR: u128 = 4;

/// Two independent standard normals from two 64-bit words (Box–Muller).
#[inline]
pub fn normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = crate::rng::open01(rng);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let rad = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (rad * c, rad * s)
}

#[inline]
fn seek(rng: &mut ChaCha8Rng, pos: u128) {
    // Seeking discards the buffered block, so skip it on sequential reads.
    if rng.get_word_pos() != pos {
        rng.set_word_pos(pos);
    }
}

pub struct GaussianDriver {
    dt0: f64,
    level: u32,
    coarse: ChaCha8Rng,
    bridge: ChaCha8Rng,
    block: ChaCha8Rng,
    k: u64,
    values: Vec<(f64, f64)>,
}

impl GaussianDriver {
    pub fn new(key: StreamKey, dt0: f64, level: u32) -> Self {
        assert!(level <= MAX_LEVEL && dt0 > 0.0);
        GaussianDriver {
            dt0,
            level,
            coarse: key.rng(Lane::Gauss, 0),
            bridge: key.rng(Lane::Bridge, 0),
            block: key.rng(Lane::Aux, 1),
            k: 0,
            values: vec![(0.0, 0.0); (1 << level) + 1],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt0 / (1u64 << self.level) as f64
    }

    pub fn substeps(&self) -> usize {
        1 << self.level
    }

    pub fn coarse_index(&self) -> u64 {
        self.k
    }

    /// One Gaussian increment spanning `2^j` coarse steps, drawn from a
    /// separate stream keyed by the current coarse index. It does not agree
    /// with the sum of the coarse increments it replaces.
    pub fn next_block(&mut self, j: u32) -> (f64, f64) {
        seek(&mut self.block, self.k as u128 * WORDS_PER_PAIR);
        let (z1, z2) = normal_pair(&mut self.block);
        let s = (self.dt0 * (1u64 << j) as f64).sqrt();
        self.k += 1 << j;
        (s * z1, s * z2)
    }

    /// Increments of the next coarse step, `2^level` of them.
    pub fn next_coarse(&mut self, out: &mut Vec<(f64, f64)>) {
        seek(&mut self.coarse, self.k as u128 * WORDS_PER_PAIR);
        let (z1, z2) = normal_pair(&mut self.coarse);
        let s0 = self.dt0.sqrt();
        let n = 1usize << self.level;
        self.values[0] = (0.0, 0.0);
        self.values[n] = (s0 * z1, s0 * z2);
        if self.level > 0 {
            let base = self.k as u128 * (1u128 << MAX_LEVEL) * WORDS_PER_PAIR;
            for l in 1..=self.level {
                let half = n >> l;
                let sd = (self.dt0 / (1u64 << (l + 1)) as f64).sqrt();
                for i in 0..(1usize << (l - 1)) {
                    let idx = (1u128 << (l - 1)) - 1 + i as u128;
                    seek(&mut self.bridge, base + idx * WORDS_PER_PAIR);
                    let (a, b) = normal_pair(&mut self.bridge);
                    let (lo, hi) = (2 * i * half, (2 * i + 2) * half);
                    let (p, q) = (self.values[lo], self.values[hi]);
                    self.values[lo + half] = (0.5 * (p.0 + q.0) + sd * a, 0.5 * (p.1 + q.1) + sd * b);
                }
            }
        }
        out.clear();
        out.extend(self.values.windows(2).map(|w| (w[1].0 - w[0].0, w[1].1 - w[0].1)));
        self.k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_passes_through_coarse_path() {
        let key = StreamKey::new(9, 2);
        let mut a = GaussianDriver::new(key, 0.01, 0);
        let mut b = GaussianDriver::new(key, 0.01, 3);
        let (mut ia, mut ib) = (Vec::new(), Vec::new());
        for _ in 0..100 {
            a.next_coarse(&mut ia);
            b.next_coarse(&mut ib);
            assert_eq!(ib.len(), 8);
            let s: (f64, f64) = ib.iter().fold((0.0, 0.0), |s, d| (s.0 + d.0, s.1 + d.1));
            assert!((s.0 - ia[0].0).abs() < 1e-14 && (s.1 - ia[0].1).abs() < 1e-14);
        }
    }

    #[test]
    fn blocks_advance_the_index_and_scale() {
        let mut d = GaussianDriver::new(StreamKey::new(5, 1), 0.01, 2);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let (x, y) = d.next_block(3);
            sum += x * x + y * y;
        }
        assert_eq!(d.coarse_index(), 80_000);
        let var = sum / 20_000.0;
        assert!((var / 0.08 - 1.0).abs() < 3.0 * (2.0 / 20_000.0f64).sqrt());
    }

    #[test]
    fn increments_have_variance_dt() {
        for level in [0, 2] {
            let mut d = GaussianDriver::new(StreamKey::new(4, 0), 0.04, level);
            let dt = d.dt();
            let mut v = Vec::new();
            let (mut s2, mut n, mut cross) = (0.0, 0.0, 0.0);
            for _ in 0..20_000 {
                d.next_coarse(&mut v);
                for &(x, y) in &v {
                    s2 += x * x + y * y;
                    cross += x * y;
                    n += 2.0;
                }
            }
            let var = s2 / n;
            // The sample variance of n normals has relative sd √(2/n).
            assert!((var / dt - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "level {level}: {var} vs {dt}");
            assert!((cross / (n / 2.0)).abs() < 3.0 * dt / (n / 2.0).sqrt());
        }
    }
}

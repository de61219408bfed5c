//! Exit laws of the walk from the centre of a square box.
//!
//! For half-width `L` the walk starts at the centre and stops on the first
//! visit to `max(|dx|, |dy|) = L`. The exit time law is tabulated exactly up to
//! survival `1e-9` and continued geometrically. The exit point is drawn from
//! its law conditioned on the exit time falling in one of `BINS` equal-mass
//! time bins, so both marginals are exact.

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};

pub const HALF_WIDTHS: [i64; 6] = [2, 4, 8, 16, 32, 64];
const BINS: usize = 32;
const SURVIVAL_CUT: f64 = 1e-9;

pub struct BoxTable {
    pub half: i64,
    times: WeightedAliasIndex<f64>,
    pmf: Vec<f64>,
    tail_mass: f64,
    tail_hazard: f64,
    bin_of_time: Vec<u8>,
    bins: Vec<WeightedAliasIndex<f64>>,
    offsets: Vec<(i32, i32)>,
    /// Exit-point marginal, aligned with [`BoxTable::offsets`].
    pub exit_law: Vec<f64>,
    pub mean_time: f64,
}

impl BoxTable {
    pub fn compute(half: i64) -> Self {
        assert!(half >= 1);
        let l = half as usize;
        let side = 2 * l + 1;
        let idx = |x: usize, y: usize| y * side + x;
        let mut offsets = Vec::new();
        let mut slot = vec![usize::MAX; side * side];
        for y in 0..side {
            for x in 0..side {
                let (dx, dy) = (x as i64 - half, y as i64 - half);
                if dx.abs().max(dy.abs()) == half && dx.abs() != dy.abs() {
                    slot[idx(x, y)] = offsets.len();
                    offsets.push((dx as i32, dy as i32));
                }
            }
        }
        let boundary: Vec<(usize, usize)> = (0..side * side).filter(|&k| slot[k] != usize::MAX).map(|k| (k, slot[k])).collect();
        let interior: Vec<usize> =
            (0..side * side).filter(|&k| (1..side - 1).contains(&(k % side)) && (1..side - 1).contains(&(k / side))).collect();

        let mut p = vec![0.0f64; side * side];
        let mut q = vec![0.0f64; side * side];
        p[idx(l, l)] = 1.0;
        let mut pmf = vec![0.0f64];
        let mut exits_by_bin = vec![vec![0.0f64; offsets.len()]; BINS];
        let mut bin_of_time = vec![0u8];
        let mut exit_law = vec![0.0f64; offsets.len()];
        let mut cum = 0.0;
        let mut survival = 1.0;
        let mut prev_survival = 1.0;
        let mut mean_time = 0.0;
        let mut t = 0usize;
        while survival > SURVIVAL_CUT {
            t += 1;
            for &k in &interior {
                let m = p[k];
                if m != 0.0 {
                    let m4 = 0.25 * m;
                    q[k - 1] += m4;
                    q[k + 1] += m4;
                    q[k - side] += m4;
                    q[k + side] += m4;
                }
            }
            let bin = ((cum * BINS as f64) as usize).min(BINS - 1);
            let mut exited = 0.0;
            for &(k, s) in &boundary {
                let v = q[k];
                if v != 0.0 {
                    exits_by_bin[bin][s] += v;
                    exit_law[s] += v;
                    exited += v;
                    q[k] = 0.0;
                }
            }
            std::mem::swap(&mut p, &mut q);
            for &k in &interior {
                q[k] = 0.0;
            }
            pmf.push(exited);
            bin_of_time.push(bin as u8);
            cum += exited;
            mean_time += exited * t as f64;
            prev_survival = survival;
            survival = interior.iter().map(|&k| p[k]).sum();
        }
        let tail_hazard = 1.0 - survival / prev_survival;
        let tail_mass = survival;
        let t_max = t as f64;
        mean_time += tail_mass * (t_max + 1.0 / tail_hazard);
        let total: f64 = exit_law.iter().sum();
        let exit_law: Vec<f64> = exit_law.iter().map(|v| v / total).collect();
        let bins = exits_by_bin
            .into_iter()
            .map(|w| if w.iter().any(|v| *v > 0.0) { w } else { vec![1.0; offsets.len()] })
            .map(|w| WeightedAliasIndex::new(w).expect("valid exit weights"))
            .collect();
        BoxTable {
            half,
            times: WeightedAliasIndex::new(pmf.clone()).expect("valid time weights"),
            pmf,
            tail_mass,
            tail_hazard,
            bin_of_time,
            bins,
            offsets,
            exit_law,
            mean_time,
        }
    }

    /// Exit-time probabilities up to the tabulation cut.
    pub fn time_pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Draws `(dx, dy, steps)`.
    #[inline]
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (i64, i64, u64) {
        let (t, bin) = if rng.random::<f64>() < self.tail_mass {
            let u: f64 = crate::rng::open01(rng);
            let extra = (u.ln() / (-self.tail_hazard).ln_1p()).floor() as u64;
            (self.bin_of_time.len() as u64 + extra, BINS - 1)
        } else {
            let t = self.times.sample(rng);
            (t as u64, self.bin_of_time[t] as usize)
        };
        let (dx, dy) = self.offsets[self.bins[bin].sample(rng)];
        (dx as i64, dy as i64, t)
    }
}

static TABLES: [OnceLock<BoxTable>; HALF_WIDTHS.len()] = [const { OnceLock::new() }; HALF_WIDTHS.len()];

/// Shared table for `HALF_WIDTHS[i]`, computed on first use.
pub fn table(i: usize) -> &'static BoxTable {
    TABLES[i].get_or_init(|| BoxTable::compute(HALF_WIDTHS[i]))
}

/// Index of the largest tabulated half-width `L` with `L − 1 ≤ bound`.
#[inline]
pub fn largest_fitting(bound: f64, max_index: usize) -> Option<usize> {
    let mut best = None;
    for (i, &l) in HALF_WIDTHS.iter().enumerate().take(max_index + 1) {
        if (l - 1) as f64 <= bound {
            best = Some(i);
        } else {
            break;
        }
    }
    best
}

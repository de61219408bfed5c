//! ε-cover times of the unit torus by Brownian motion.
//!
//! Targets sit on a square grid; a target is reached at the first sample time
//! the wrapped path comes within ε of it.

use serde::{Deserialize, Serialize};

use super::driver::GaussianDriver;
use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusState {
    pub position: (f64, f64),
    pub time: f64,
}

/// Wraps into `(−½, ½]`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let w = x - x.round();
    if w <= -0.5 {
        w + 1.0
    } else {
        w
    }
}

impl TorusState {
    pub fn step(&mut self, dx: f64, dy: f64, dt: f64) {
        self.position = (wrap(self.position.0 + dx), wrap(self.position.1 + dy));
        self.time += dt;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusCover {
    pub epsilons: Vec<f64>,
    /// One cover time per ε.
    pub cover_times: Vec<f64>,
    pub dt: f64,
    pub spacing: f64,
    pub targets: usize,
    pub steps: u64,
    pub seed: StreamKey,
}

/// Grid points per side for spacing at most `s`.
pub fn grid_side(s: f64) -> usize {
    (1.0 / s).ceil() as usize
}

/// Cover times for several ε along one path and one target grid of spacing
/// `1/⌈1/spacing⌉`. Smaller ε can only take longer.
pub fn torus_cover_multi(epsilons: &[f64], dt: f64, spacing: f64, key: StreamKey, budget: u64) -> Result<TorusCover> {
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0 && e <= 0.05)) {
        return Err(Error::invalid("each ε must lie in (0, 0.05]"));
    }
    let eps_min = epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dt > 0.0 && dt <= eps_min * eps_min / 25.0) {
        return Err(Error::invalid(format!("need 0 < dt ≤ ε²/25, got {dt}")));
    }
    if !(spacing > 0.0 && spacing <= eps_min / 4.0) {
        return Err(Error::invalid(format!("need target spacing ≤ ε/4, got {spacing}")));
    }
    let m = grid_side(spacing);
    let s = 1.0 / m as f64;
    // hit[e][target]; targets at (i·s, j·s) wrapped.
    let mut first: Vec<Vec<bool>> = vec![vec![false; m * m]; epsilons.len()];
    let mut left: Vec<usize> = vec![m * m; epsilons.len()];
    let mut cover = vec![f64::NAN; epsilons.len()];
    let mut state = TorusState { position: (0.0, 0.0), time: 0.0 };
    let mut driver = GaussianDriver::new(key, dt, 0);
    let mut inc = Vec::with_capacity(1);
    let reach: Vec<i64> = epsilons.iter().map(|e| (e / s).ceil() as i64).collect();
    let mut steps = 0u64;
    loop {
        let (px, py) = state.position;
        let (ci, cj) = ((px / s).round() as i64, (py / s).round() as i64);
        let mut open = 0;
        for (k, &eps) in epsilons.iter().enumerate() {
            if left[k] == 0 {
                continue;
            }
            let e2 = eps * eps;
            let w = reach[k];
            for dj in -w..=w {
                let j = cj + dj;
                let dy = wrap(j as f64 * s - py);
                let row = j.rem_euclid(m as i64) as usize * m;
                for di in -w..=w {
                    let i = ci + di;
                    let dx = wrap(i as f64 * s - px);
                    if dx * dx + dy * dy <= e2 {
                        let cell = &mut first[k][row + i.rem_euclid(m as i64) as usize];
                        if !*cell {
                            *cell = true;
                            left[k] -= 1;
                        }
                    }
                }
            }
            if left[k] == 0 {
                cover[k] = state.time;
            } else {
                open += 1;
            }
        }
        if open == 0 {
            break;
        }
        steps += 1;
        if steps > budget {
            return Err(Error::BudgetExceeded { budget });
        }
        driver.next_coarse(&mut inc);
        state.step(inc[0].0, inc[0].1, dt);
    }
    Ok(TorusCover { epsilons: epsilons.to_vec(), cover_times: cover, dt, spacing: s, targets: m * m, steps, seed: key })
}

pub const DEFAULT_TORUS_BUDGET: u64 = 2_000_000_000;

/// `𝓒_ε` with target spacing `ε/4`.
pub fn torus_cover_time(eps: f64, dt: f64, key: StreamKey) -> Result<f64> {
    Ok(torus_cover_multi(&[eps], dt, eps / 4.0, key, DEFAULT_TORUS_BUDGET)?.cover_times[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_lands_in_fundamental_domain() {
        for x in [-1.5, -0.5, -0.25, 0.0, 0.5, 0.75, 3.5, -7.2, 1e6 + 0.3] {
            let w = wrap(x);
            assert!(w > -0.5 && w <= 0.5, "{x} -> {w}");
            assert!(((x - w) - (x - w).round()).abs() < 1e-9);
        }
        let mut s = TorusState { position: (0.49, -0.49), time: 0.0 };
        s.step(0.02, -0.02, 0.5);
        assert!((s.position.0 + 0.49).abs() < 1e-12 && (s.position.1 - 0.49).abs() < 1e-12);
        assert_eq!(s.time, 0.5);
    }

    #[test]
    fn smaller_epsilon_takes_longer() {
        for i in 0..3 {
            let c = torus_cover_multi(&[0.05, 0.04, 0.03], 0.03f64.powi(2) / 25.0, 0.03 / 4.0, StreamKey::new(2, i), 1 << 32).unwrap();
            assert!(c.cover_times.windows(2).all(|w| w[0] <= w[1]), "{c:?}");
            assert!(c.cover_times[0] > 0.0);
        }
    }

    #[test]
    fn validation_and_budget() {
        let key = StreamKey::new(1, 0);
        assert!(torus_cover_time(0.1, 1e-5, key).is_err());
        assert!(torus_cover_time(0.05, 1e-3, key).is_err());
        assert!(torus_cover_multi(&[0.05], 1e-4, 0.02, key, 10).is_err());
        assert!(matches!(torus_cover_multi(&[0.05], 1e-4, 0.01, key, 10), Err(Error::BudgetExceeded { budget: 10 })));
    }

    #[test]
    fn replay() {
        let a = torus_cover_time(0.05, 1e-4, StreamKey::new(4, 4)).unwrap();
        assert_eq!(a, torus_cover_time(0.05, 1e-4, StreamKey::new(4, 4)).unwrap());
    }
}

//! Wiener sausage cover runs of `D(0, r)` with excursion counting between
//! `∂D(0, 2r)` and `∂D(0, 2R℘(r))`.
//!
//! Near the disk the path is sampled at the fine step of the driver. Farther
//! out it moves in Gaussian blocks whose length is chosen at coarse
//! boundaries, so refining `dt` leaves the far path unchanged. The return leg
//! from the outer circle jumps straight to its exact hitting point on
//! `∂D(0, 2r)`; its duration comes from the annulus chain and is approximate.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::driver::{GaussianDriver, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::rng::{Lane, StreamKey};
use crate::scales;
use crate::srw::cover::{ExcursionLedger, HitKind};
use crate::srw::walker::dyadic_return_time;

/// Cells of side `h` meeting `D(0, r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SausageGrid {
    pub r: f64,
    pub h: f64,
    /// Cells per side; cell `(i, j)` has center `((i + ½)h − L, (j + ½)h − L)`.
    pub side: usize,
    half_width: f64,
    /// `None` for cells outside the target, else the covered flag.
    cells: Vec<Option<bool>>,
    pub uncovered: usize,
}

impl SausageGrid {
    pub fn new(r: f64, h: f64) -> Result<Self> {
        if !(r > 0.0 && h > 0.0 && h <= r) {
            return Err(Error::invalid(format!("need 0 < h ≤ r, got h = {h}, r = {r}")));
        }
        let side = 2 * (r / h).ceil() as usize + 2;
        let half_width = side as f64 * h / 2.0;
        let mut cells = Vec::with_capacity(side * side);
        let mut uncovered = 0;
        for j in 0..side {
            for i in 0..side {
                let (cx, cy) = ((i as f64 + 0.5) * h - half_width, (j as f64 + 0.5) * h - half_width);
                let inside = nearest_distance(cx, cy, h) < r;
                cells.push(inside.then_some(false));
                uncovered += inside as usize;
            }
        }
        Ok(SausageGrid { r, h, side, half_width, cells, uncovered })
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h - self.half_width, (j as f64 + 0.5) * self.h - self.half_width)
    }

    pub fn target_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_covered(&self) -> bool {
        self.uncovered == 0
    }

    pub fn is_marked(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.side + i] == Some(true)
    }

    /// Marks target cells whose centers lie within `m` of `p`; true once all
    /// are covered.
    pub fn mark_disk(&mut self, p: (f64, f64), m: f64) -> bool {
        if p.0.hypot(p.1) > self.r + self.h / SQRT_2 + m {
            return self.is_covered();
        }
        let lo = |c: f64| (((c - m + self.half_width) / self.h - 0.5).ceil().max(0.0)) as usize;
        let hi = |c: f64| (((c + m + self.half_width) / self.h - 0.5).floor().min(self.side as f64 - 1.0)).max(-1.0);
        let (hx, hy) = (hi(p.0), hi(p.1));
        if hx < 0.0 || hy < 0.0 {
            return self.is_covered();
        }
        let m2 = m * m;
        for j in lo(p.1)..=hy as usize {
            let dy = (j as f64 + 0.5) * self.h - self.half_width - p.1;
            let row = j * self.side;
            for i in lo(p.0)..=hx as usize {
                let dx = (i as f64 + 0.5) * self.h - self.half_width - p.0;
                if dx * dx + dy * dy <= m2 {
                    if let Some(c @ false) = &mut self.cells[row + i] {
                        *c = true;
                        self.uncovered -= 1;
                    }
                }
            }
        }
        self.is_covered()
    }

    /// A lower bound on the largest `ρ` with `D(0, ρ)` inside the marked cells.
    pub fn covered_radius(&self) -> f64 {
        let mut best = self.r;
        for j in 0..self.side {
            for i in 0..self.side {
                if self.cells[j * self.side + i] == Some(false) {
                    let (cx, cy) = self.center(i, j);
                    best = best.min(nearest_distance(cx, cy, self.h));
                }
            }
        }
        best
    }
}

/// Distance from the origin to the closest point of the cell centered at `(cx, cy)`.
fn nearest_distance(cx: f64, cy: f64, h: f64) -> f64 {
    let gap = |c: f64| (c.abs() - h / 2.0).max(0.0);
    gap(cx).hypot(gap(cy))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SausageParams {
    pub r: f64,
    /// The `R` in the outer radius `2R℘(r)`.
    pub big_r: f64,
    /// Explicit outer radius, overriding `2R℘(r)`.
    pub outer: Option<f64>,
    pub sausage_radius: f64,
    /// Coarse step; the path is sampled at `dt / 2^level` near the disk.
    pub dt: f64,
    pub level: u32,
    pub h: f64,
    /// Cap on driver calls.
    pub budget: u64,
    pub checkpoint_ratio: Option<f64>,
}

impl SausageParams {
    pub fn new(r: f64) -> Self {
        SausageParams {
            r,
            big_r: 0.1,
            outer: None,
            sausage_radius: 1.0,
            dt: 0.01,
            level: 0,
            h: 0.2,
            budget: 4_000_000_000,
            checkpoint_ratio: Some(2.0),
        }
    }

    /// Radius of the excursion target circle.
    pub fn outer_radius(&self) -> Result<f64> {
        match self.outer {
            Some(o) => Ok(o),
            None => Ok(2.0 * self.big_r * scales::wp(self.r)?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 8.0) {
            return Err(Error::invalid(format!("sausage runs need r ≥ 8, got {}", self.r)));
        }
        if self.outer.is_none() && !(self.big_r > 0.0 && self.big_r * self.r.ln().powi(3) > 1.0) {
            return Err(Error::invalid(format!("need R (log r)³ > 1, got R = {}", self.big_r)));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01 * self.scale() * self.scale() && self.level <= MAX_LEVEL) {
            return Err(Error::invalid(format!("need 0 < dt ≤ 0.01 a² and a supported level, got dt = {}", self.dt)));
        }
        if !(self.h > 0.0 && self.h <= 0.2 * self.scale()) {
            return Err(Error::invalid(format!("need h ≤ 0.2 a, got {}", self.h)));
        }
        let a = self.sausage_radius;
        if !(a > self.h / SQRT_2) {
            return Err(Error::invalid("sausage radius must exceed the cell half-diagonal"));
        }
        let outer = self.outer_radius()?;
        if !(outer > 2.0 * self.r && 2.0 * self.r > self.r + a + 8.0 * self.dt.sqrt()) {
            return Err(Error::invalid(format!("need r + a + 8√dt < 2r < outer, got outer = {outer}")));
        }
        Ok(())
    }

    /// The unit of length: step and cell bounds scale with the sausage radius.
    fn scale(&self) -> f64 {
        self.sausage_radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SausageRun {
    pub r: f64,
    pub cover_time: f64,
    pub excursion_count: u32,
    pub ledger: ExcursionLedger,
    /// Driver calls made.
    pub moves: u64,
    /// Path samples taken near the disk.
    pub fine_samples: u64,
    pub seed: StreamKey,
    /// False once a return leg has been taken.
    pub time_exact: bool,
    /// `(t, ρ)` with `D(0, ρ)` covered by time `t`, at geometric times.
    pub checkpoints: Vec<(f64, f64)>,
}

/// Angle of the hitting point on `∂D(0, ρ)` from `z` outside, relative to
/// `arg z` (wrapped Cauchy with `q = ρ/|z|`).
pub fn exterior_hit_angle<R: Rng>(rng: &mut R, q: f64) -> f64 {
    let u: f64 = rng.random();
    2.0 * (((1.0 - q) / (1.0 + q)) * (PI * (u - 0.5)).tan()).atan()
}

struct Checkpoints {
    ratio: Option<f64>,
    next: f64,
    list: Vec<(f64, f64)>,
}

impl Checkpoints {
    #[inline]
    fn flush(&mut self, upto: f64, grid: &SausageGrid) {
        if let Some(g) = self.ratio {
            if self.next < upto {
                let rho = grid.covered_radius();
                while self.next < upto {
                    self.list.push((self.next, rho));
                    self.next *= g;
                }
            }
        }
    }
}

pub fn sausage_cover_run(p: &SausageParams, key: StreamKey) -> Result<SausageRun> {
    p.validate()?;
    if let Some(g) = p.checkpoint_ratio {
        if !(g > 1.0) {
            return Err(Error::invalid("checkpoint ratio must exceed 1"));
        }
    }
    let r = p.r;
    let a = p.sausage_radius;
    let inner = 2.0 * r;
    let outer = p.outer_radius()?;
    let margin = a - p.h / SQRT_2;
    let mut grid = SausageGrid::new(r, p.h)?;
    let mut driver = GaussianDriver::new(key, p.dt, p.level);
    let mut ret = key.rng(Lane::Return, 0);
    let fine_dt = driver.dt();
    let zone = r + a;
    let guard = 8.0 * p.dt.sqrt();
    let mut ledger = ExcursionLedger::new(inner, outer);
    let mut cps = Checkpoints { ratio: p.checkpoint_ratio, next: p.dt * 1024.0, list: Vec::new() };

    let (mut x, mut y) = (0.0f64, 0.0f64);
    // Time is `offset + k·dt` plus the fine steps taken inside the current coarse step.
    let mut offset = 0.0f64;
    let mut moves = 0u64;
    let mut fine_samples = 0u64;
    let mut time_exact = true;
    let mut inc = Vec::with_capacity(driver.substeps());
    grid.mark_disk((x, y), margin);

    let cover_time = 'run: loop {
        // Out leg: from the current point until the outer circle.
        loop {
            moves += 1;
            if moves > p.budget {
                return Err(Error::BudgetExceeded { budget: p.budget });
            }
            let d = x.hypot(y);
            let to_zone = d - zone;
            if to_zone > guard {
                let room = to_zone.min(outer - d).max(0.0);
                let j = ((room / 8.0).powi(2) / p.dt).log2().floor().clamp(0.0, 40.0) as u32;
                let (dx, dy) = driver.next_block(j);
                x += dx;
                y += dy;
                let t = offset + driver.coarse_index() as f64 * p.dt;
                if x * x + y * y >= outer * outer {
                    cps.flush(t, &grid);
                    ledger.push(HitKind::Outer, t);
                    break;
                }
            } else {
                let t0 = offset + driver.coarse_index() as f64 * p.dt;
                driver.next_coarse(&mut inc);
                for (s, &(dx, dy)) in inc.iter().enumerate() {
                    x += dx;
                    y += dy;
                    fine_samples += 1;
                    let t = t0 + (s + 1) as f64 * fine_dt;
                    if t > cps.next {
                        cps.flush(t, &grid);
                    }
                    if grid.mark_disk((x, y), margin) {
                        break 'run t;
                    }
                }
            }
        }
        // Back leg: exact landing point, approximate duration.
        let d = x.hypot(y);
        let theta = y.atan2(x) + exterior_hit_angle(&mut ret, inner / d);
        let dur = dyadic_return_time(&mut ret, d, inner);
        time_exact = false;
        (x, y) = (inner * theta.cos(), inner * theta.sin());
        offset += dur;
        let t = offset + driver.coarse_index() as f64 * p.dt;
        ledger.push(HitKind::Inner, t);
    };
    cps.flush(cover_time, &grid);
    cps.list.push((cover_time, grid.covered_radius()));
    Ok(SausageRun {
        r,
        cover_time,
        excursion_count: ledger.completed_before(cover_time),
        ledger,
        moves,
        fine_samples,
        seed: key,
        time_exact,
        checkpoints: cps.list,
    })
}

/// The wrapped Cauchy CDF on `(−π, π]`.
pub fn wrapped_cauchy_cdf(theta: f64, q: f64) -> f64 {
    let t = ((1.0 + q) / (1.0 - q) * (theta / 2.0).tan()).atan();
    0.5 + t / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_pvalue;
    use std::f64::consts::TAU;

    #[test]
    fn grid_counts_and_marking() {
        let g = SausageGrid::new(8.0, 0.2).unwrap();
        let n = g.target_count() as f64;
        // Cells meeting the disk: between the area of D(0, r) and D(0, r + h√2).
        assert!(n * 0.04 > PI * 64.0 && n * 0.04 < PI * (8.0 + 0.2 * SQRT_2).powi(2));
        let mut g2 = g.clone();
        assert!(!g2.mark_disk((0.0, 0.0), 0.8));
        let marked = g.uncovered - g2.uncovered;
        assert!((marked as f64 * 0.04 - PI * 0.64).abs() < 0.4);
        for j in 0..g2.side {
            for i in 0..g2.side {
                if g2.is_marked(i, j) {
                    let c = g2.center(i, j);
                    assert!(c.0.hypot(c.1) <= 0.8);
                }
            }
        }
        assert_eq!(g2.covered_radius() > 0.5, true);
        assert!(!g2.mark_disk((100.0, 0.0), 0.8));
    }

    #[test]
    fn exterior_hits_follow_the_poisson_kernel() {
        let mut rng = StreamKey::new(3, 0).rng(Lane::Return, 0);
        let q = 0.3;
        let u: Vec<f64> = (0..5000).map(|_| wrapped_cauchy_cdf(exterior_hit_angle(&mut rng, q), q)).collect();
        let d = crate::stats::ks_uniform(&u);
        assert!(ks_pvalue(d, u.len()) > 0.01);
    }

    #[test]
    fn exterior_hits_match_sphere_stepping() {
        // From (3, 0) to ∂D(0, 1): sphere stepping inside D(0, 300), and the
        // jump law for paths that reach ∂D(0, 300) first. Compared on the
        // fraction landing within π/4 of the axis.
        let q = 1.0 / 3.0;
        let exact = wrapped_cauchy_cdf(PI / 4.0, q) - wrapped_cauchy_cdf(-PI / 4.0, q);
        let mut rng = StreamKey::new(4, 0).rng(Lane::Aux, 0);
        let n = 4000;
        let mut near = 0.0;
        for _ in 0..n {
            let ex = super::super::sample_annulus_side((3.0, 0.0), 1.0, 300.0, 1e-4, &mut rng).unwrap();
            let mut theta = ex.point.1.atan2(ex.point.0);
            if ex.side == super::super::Side::Outer {
                theta += exterior_hit_angle(&mut rng, 1.0 / 300.0);
            }
            near += (super::super::torus::wrap(theta / TAU).abs() * TAU <= PI / 4.0) as u8 as f64;
        }
        let f = near / n as f64;
        assert!((f - exact).abs() < 3.0 * (exact * (1.0 - exact) / n as f64).sqrt(), "{f} vs {exact}");
    }

    #[test]
    fn small_runs_are_consistent() {
        let p = SausageParams { big_r: 0.2, ..SausageParams::new(8.0) };
        for i in 0..6 {
            let run = sausage_cover_run(&p, StreamKey::new(9, i)).unwrap();
            assert!(run.cover_time > 8.0);
            assert!(run.ledger.is_valid());
            let outer_hits = run.ledger.hits.iter().filter(|h| h.0 == HitKind::Outer).count() as u32;
            assert_eq!(run.excursion_count, outer_hits.saturating_sub(1));
            assert!(run.checkpoints.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
            assert_eq!(run.checkpoints.last().unwrap().1, 8.0);
        }
        let a = sausage_cover_run(&p, StreamKey::new(9, 2)).unwrap();
        assert_eq!(a, sausage_cover_run(&p, StreamKey::new(9, 2)).unwrap());
    }

    #[test]
    fn halving_dt_barely_moves_the_count() {
        let base = SausageParams::new(16.0);
        let fine = SausageParams { level: 1, ..base };
        let (mut close, mut sooner) = (0, 0);
        for i in 0..20 {
            let a = sausage_cover_run(&base, StreamKey::new(17, i)).unwrap();
            let b = sausage_cover_run(&fine, StreamKey::new(17, i)).unwrap();
            close += (a.excursion_count.abs_diff(b.excursion_count) <= 1) as u32;
            // Extra samples on a shared coarse path can only cover sooner, up
            // to rounding of the large return-leg offsets.
            sooner += (b.cover_time <= a.cover_time * (1.0 + 1e-12)) as u32;
        }
        assert!(close >= 18, "{close}/20");
        assert!(sooner >= 18, "{sooner}/20");
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = SausageParams::new(30.0);
        assert!(sausage_cover_run(&SausageParams { r: 4.0, ..p }, StreamKey::new(1, 0)).is_err());
        assert!(sausage_cover_run(&SausageParams { big_r: 0.01, ..p }, StreamKey::new(1, 0)).is_err());
        assert!(sausage_cover_run(&SausageParams { dt: 0.05, ..p }, StreamKey::new(1, 0)).is_err());
        assert!(sausage_cover_run(&SausageParams { h: 0.5, ..p }, StreamKey::new(1, 0)).is_err());
        let tight = SausageParams { budget: 1000, ..p };
        assert!(matches!(sausage_cover_run(&tight, StreamKey::new(1, 0)), Err(Error::BudgetExceeded { budget: 1000 })));
    }
}

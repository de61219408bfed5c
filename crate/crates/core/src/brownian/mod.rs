//! Planar Brownian motion: annulus hitting laws, exit times, Wiener sausage
//! excursions and ε-cover times of the torus.
//!
//! Brownian motion has variance `t` per coordinate at time `t`.

pub mod driver;
pub mod sausage;
pub mod torus;

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Lane, StreamKey};
pub use driver::GaussianDriver;
pub use sausage::{sausage_cover_run, SausageGrid, SausageParams, SausageRun};
pub use torus::{torus_cover_multi, torus_cover_time, TorusCover, TorusState, DEFAULT_TORUS_BUDGET};

/// `(log r₃ − log r₂)/(log r₃ − log r₁)`.
pub fn annulus_hit_prob_formula(r1: f64, r2: f64, r3: f64) -> Result<f64> {
    if !(0.0 < r1 && r1 < r2 && r2 < r3) {
        return Err(Error::invalid(format!("need 0 < r1 < r2 < r3, got ({r1}, {r2}, {r3})")));
    }
    Ok((r3.ln() - r2.ln()) / (r3.ln() - r1.ln()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inner,
    Outer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusExit {
    pub side: Side,
    pub point: (f64, f64),
    pub jumps: u32,
}

/// Walk on spheres in the annulus `r1 < |x| < r3` until within `tol` of a
/// boundary circle; the exit point is projected onto that circle.
pub fn sample_annulus_side<R: Rng>(pos: (f64, f64), r1: f64, r3: f64, tol: f64, rng: &mut R) -> Result<AnnulusExit> {
    let d0 = pos.0.hypot(pos.1);
    if !(0.0 < r1 && r1 < d0 && d0 < r3) {
        return Err(Error::invalid(format!("need r1 < |pos| < r3, got |pos| = {d0}")));
    }
    if !(tol > 0.0 && tol < (r3 - r1) / 100.0) {
        return Err(Error::invalid(format!("tolerance must lie in (0, (r3 − r1)/100), got {tol}")));
    }
    let (mut x, mut y) = pos;
    let mut jumps = 0;
    loop {
        let d = x.hypot(y);
        let (din, dout) = (d - r1, r3 - d);
        if din <= tol || dout <= tol {
            let (side, target) = if din <= dout { (Side::Inner, r1) } else { (Side::Outer, r3) };
            return Ok(AnnulusExit { side, point: (x * target / d, y * target / d), jumps });
        }
        let rho = din.min(dout);
        let (s, c) = (TAU * rng.random::<f64>()).sin_cos();
        x += rho * c;
        y += rho * s;
        jumps += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideEstimate {
    pub inner_fraction: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Inner-hit frequency from the axis point `(r2, 0)` by walk on spheres.
pub fn annulus_side_frequency(r1: f64, r2: f64, r3: f64, samples: u64, seed: u64, tol: f64) -> Result<SideEstimate> {
    annulus_hit_prob_formula(r1, r2, r3)?;
    let inner: Result<Vec<bool>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamKey::new(seed, i).rng(Lane::Aux, 0);
            Ok(sample_annulus_side((r2, 0.0), r1, r3, tol, &mut rng)?.side == Side::Inner)
        })
        .collect();
    let k = inner?.iter().filter(|b| **b).count() as f64;
    let p = k / samples as f64;
    Ok(SideEstimate { inner_fraction: p, std_error: (p * (1.0 - p) / samples as f64).sqrt(), samples })
}

/// Inner-hit frequency by fixed-step Gaussian simulation; the side is the
/// first circle crossed by a sample point.
pub fn annulus_side_frequency_direct(r1: f64, r2: f64, r3: f64, samples: u64, seed: u64, dt: f64) -> Result<SideEstimate> {
    annulus_hit_prob_formula(r1, r2, r3)?;
    let inner: Vec<bool> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut d = GaussianDriver::new(StreamKey::new(seed, i), dt, 0);
            let (mut x, mut y) = (r2, 0.0);
            let mut inc = Vec::with_capacity(1);
            loop {
                d.next_coarse(&mut inc);
                x += inc[0].0;
                y += inc[0].1;
                let n2 = x * x + y * y;
                if n2 <= r1 * r1 {
                    return true;
                }
                if n2 >= r3 * r3 {
                    return false;
                }
            }
        })
        .collect();
    let p = inner.iter().filter(|b| **b).count() as f64 / samples as f64;
    Ok(SideEstimate { inner_fraction: p, std_error: (p * (1.0 - p) / samples as f64).sqrt(), samples })
}

/// A sampled path at spacing `dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPath {
    pub dt: f64,
    pub positions: Vec<(f64, f64)>,
    pub elapsed: f64,
}

impl PlanarPath {
    pub fn simulate(start: (f64, f64), dt: f64, steps: usize, key: StreamKey) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let mut d = GaussianDriver::new(key, dt, 0);
        let mut positions = Vec::with_capacity(steps + 1);
        positions.push(start);
        let mut inc = Vec::with_capacity(1);
        let mut p = start;
        for _ in 0..steps {
            d.next_coarse(&mut inc);
            p = (p.0 + inc[0].0, p.1 + inc[0].1);
            positions.push(p);
        }
        Ok(PlanarPath { dt, elapsed: dt * steps as f64, positions })
    }

    /// Per-coordinate sample variance of the increments and its standard error.
    pub fn increment_variance(&self) -> (f64, f64) {
        let v: Vec<f64> =
            self.positions.windows(2).flat_map(|w| [w[1].0 - w[0].0, w[1].1 - w[0].1]).map(|d| d * d).collect();
        crate::stats::mean_se(&v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub r: f64,
    pub dt: f64,
    pub samples: u64,
    pub mean: f64,
    pub std_error: f64,
    /// Fraction with exit time at most `r^{2−ε}`.
    pub below: f64,
    /// Fraction with exit time at least `r^{2+ε}`.
    pub above: f64,
}

/// Exit time of `D(0, r)` from the origin by fixed-step simulation at
/// `dt0 / 2^level`. Runs at different levels share their coarse path.
pub fn exit_time(r: f64, dt0: f64, level: u32, key: StreamKey) -> Result<f64> {
    if !(r > 0.0 && dt0 > 0.0) || level > driver::MAX_LEVEL {
        return Err(Error::invalid("need r > 0, dt > 0 and a supported refinement level"));
    }
    let mut d = GaussianDriver::new(key, dt0, level);
    let dt = d.dt();
    let (mut x, mut y, mut t) = (0.0f64, 0.0f64, 0.0f64);
    let r2 = r * r;
    let mut inc = Vec::with_capacity(d.substeps());
    loop {
        d.next_coarse(&mut inc);
        for &(dx, dy) in &inc {
            x += dx;
            y += dy;
            t += dt;
            if x * x + y * y >= r2 {
                return Ok(t);
            }
        }
    }
}

pub fn brownian_exit_times(r: f64, dt0: f64, level: u32, samples: u64, seed: u64) -> Result<Vec<f64>> {
    (0..samples).into_par_iter().map(|i| exit_time(r, dt0, level, StreamKey::new(seed, i))).collect()
}

pub fn brownian_exit_stats(r: f64, eps: f64, dt0: f64, level: u32, samples: u64, seed: u64) -> Result<ExitStats> {
    if !(r >= 1.0) {
        return Err(Error::invalid(format!("exit statistics need r ≥ 1, got {r}")));
    }
    let ts = brownian_exit_times(r, dt0, level, samples, seed)?;
    let (mean, se) = crate::stats::mean_se(&ts);
    let (lo, hi) = (r.powf(2.0 - eps), r.powf(2.0 + eps));
    let n = samples as f64;
    Ok(ExitStats {
        r,
        dt: dt0 / (1u64 << level) as f64,
        samples,
        mean,
        std_error: se,
        below: ts.iter().filter(|&&t| t <= lo).count() as f64 / n,
        above: ts.iter().filter(|&&t| t >= hi).count() as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_pvalue, ks_uniform};

    #[test]
    fn formula_examples() {
        let e = std::f64::consts::E;
        assert!((annulus_hit_prob_formula(1.0, e, e * e).unwrap() - 0.5).abs() < 1e-15);
        assert!((annulus_hit_prob_formula(2.0, 5.0, 50.0).unwrap() - 0.7153382790366965).abs() < 1e-15);
        assert!(annulus_hit_prob_formula(1.0, 1.0 + 1e-12, 10.0).unwrap() > 1.0 - 1e-11);
        assert!(annulus_hit_prob_formula(2.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn sphere_stepping_side_and_angle() {
        let e = std::f64::consts::E;
        let est = annulus_side_frequency(1.0, e, e * e, 10_000, 7, 1e-6).unwrap();
        assert!((est.inner_fraction - 0.5).abs() < 0.02, "{est:?}");

        // Exit angle from a disk centered at the start: an annulus with a tiny hole.
        let mut rng = StreamKey::new(8, 0).rng(Lane::Aux, 0);
        let mut angles = Vec::new();
        for _ in 0..4000 {
            let ex = sample_annulus_side((0.0, 1e-3), 1e-9, 1.0, 1e-4, &mut rng).unwrap();
            if ex.side == Side::Outer {
                angles.push((ex.point.1.atan2(ex.point.0) / TAU).rem_euclid(1.0));
            }
        }
        let d = ks_uniform(&angles);
        assert!(ks_pvalue(d, angles.len()) > 0.01, "KS {d}");
    }

    #[test]
    fn tolerance_is_validated() {
        let mut rng = StreamKey::new(1, 0).rng(Lane::Aux, 0);
        assert!(sample_annulus_side((2.0, 0.0), 1.0, 3.0, 0.05, &mut rng).is_err());
        assert!(sample_annulus_side((4.0, 0.0), 1.0, 3.0, 0.001, &mut rng).is_err());
    }

    #[test]
    fn sphere_stepping_matches_direct_simulation() {
        let a = annulus_side_frequency(1.0, 2.0, 6.0, 4000, 11, 1e-6).unwrap();
        let b = annulus_side_frequency_direct(1.0, 2.0, 6.0, 4000, 12, 1e-4).unwrap();
        let z = crate::stats::z_diff(a.inner_fraction, a.std_error, b.inner_fraction, b.std_error);
        assert!(z.abs() < 3.0, "{a:?} {b:?}");
    }

    #[test]
    fn increment_variance_self_test() {
        let p = PlanarPath::simulate((0.0, 0.0), 0.01, 50_000, StreamKey::new(3, 3)).unwrap();
        assert_eq!(p.positions.len(), 50_001);
        assert!((p.elapsed - 500.0).abs() < 1e-9);
        let (v, se) = p.increment_variance();
        assert!((v - 0.01).abs() < 3.0 * se);
    }

    #[test]
    fn unit_disk_mean_exit_time() {
        let s = brownian_exit_stats(1.0, 0.25, 1e-4, 0, 4000, 5).unwrap();
        assert!((s.mean - 0.5).abs() < 3.0 * s.std_error + 0.01, "{s:?}");
    }
}

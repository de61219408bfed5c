//! Simple random walk: hitting times, hitting probabilities, cover times and
//! excursion counts.

pub mod boxes;
pub mod cover;
pub mod walker;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, Radius};
use crate::rng::{Lane, StepRng, StreamKey};
pub use cover::{simulate_cover, CoverOptions, CoverRunResult, ExcursionLedger, HitKind};
use walker::{LegEnd, NoObserver, Observer};
pub use walker::{Engine, FarField, Leg, Walker};

pub const DEFAULT_BUDGET: u64 = 10_000_000_000;

pub fn walker_for(key: StreamKey, sub: u64, start: LatticePoint, engine: Engine, budget: u64) -> Walker {
    Walker::new(start, StepRng::new(key.rng(Lane::Walk, sub)), engine, budget)
}

/// Walks until the first visit to `∂D_r`; returns the hit point and `ζ(r)`.
pub fn run_until_hit(walker: &mut Walker, r: f64) -> Result<(LatticePoint, u64)> {
    let rad = Radius::new(r)?;
    let t0 = walker.time;
    walker.run_leg(&Leg::new().stop(rad.sq_floor()), &mut NoObserver)?;
    Ok((walker.position(), (walker.time - t0) as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub successes: u64,
}

impl Estimate {
    pub fn binomial(successes: u64, samples: u64) -> Self {
        let p = successes as f64 / samples as f64;
        Estimate { estimate: p, std_error: (p * (1.0 - p) / samples as f64).sqrt(), samples, successes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// The positive-axis point of `∂D_r`.
    Fixed,
    /// Sample `i` starts at the image of the axis point under symmetry `i mod 8`.
    Symmetrized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingOptions {
    pub engine: Engine,
    pub start: StartMode,
    pub budget: u64,
}

impl Default for HittingOptions {
    fn default() -> Self {
        HittingOptions { engine: Engine::Accelerated, start: StartMode::Fixed, budget: DEFAULT_BUDGET }
    }
}

fn start_point(r: f64, mode: StartMode, i: u64) -> Result<LatticePoint> {
    let p = crate::annulus::axis_boundary_point(r)?;
    Ok(match mode {
        StartMode::Fixed => p,
        StartMode::Symmetrized => p.dihedral((i % 8) as u8),
    })
}

/// Monte Carlo estimate of `P^x{ζ(ρ) < ζ(P)}` for `x ∈ ∂D_r`.
pub fn hitting_prob_estimate(rho: f64, r: f64, p: f64, samples: u64, seed: u64, opts: &HittingOptions) -> Result<Estimate> {
    hitting_prob_range(rho, r, p, 0..samples, seed, opts)
}

/// As [`hitting_prob_estimate`] over the walks with indices in `runs`, so
/// disjoint batches combine into one estimate.
pub fn hitting_prob_range(rho: f64, r: f64, p: f64, runs: Range<u64>, seed: u64, opts: &HittingOptions) -> Result<Estimate> {
    if runs.is_empty() {
        return Err(Error::invalid("samples must be positive"));
    }
    if !(0.0 <= rho && rho < r && r < p) {
        return Err(Error::invalid(format!("need ρ < r < P, got ({rho}, {r}, {p})")));
    }
    let (inner, outer) = (Radius::new(rho)?.sq_floor(), Radius::new(p)?.sq_floor());
    let leg = Leg::new().stop(inner).stop(outer);
    let samples = runs.end - runs.start;
    let hits: Result<Vec<bool>> = runs
        .into_par_iter()
        .map(|i| {
            let mut w = walker_for(StreamKey::new(seed, i), 0, start_point(r, opts.start, i)?, opts.engine, opts.budget);
            Ok(w.run_leg(&leg, &mut NoObserver)? == LegEnd::Stop(0))
        })
        .collect();
    let k = hits?.iter().filter(|h| **h).count() as u64;
    Ok(Estimate::binomial(k, samples))
}

struct OriginStop;

impl Observer for OriginStop {
    #[inline]
    fn visit(&mut self, x: i64, y: i64, _: f64) -> bool {
        x == 0 && y == 0
    }
}

/// Monte Carlo estimate of `P^x{ζ(0) < ζ(P)}` for `x` the axis point of `∂D_r`,
/// where `ζ(0)` is the first visit to the origin.
pub fn hit_origin_before(p: f64, r: f64, samples: u64, seed: u64, opts: &HittingOptions) -> Result<Estimate> {
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    if !(0.0 < r && r < p) {
        return Err(Error::invalid(format!("need 0 < r < P, got ({r}, {p})")));
    }
    let leg = Leg::new().stop(Radius::new(p)?.sq_floor()).watch(0);
    let hits: Result<Vec<bool>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut w = walker_for(StreamKey::new(seed, i), 0, start_point(r, opts.start, i)?, opts.engine, opts.budget);
            Ok(w.run_leg(&leg, &mut OriginStop)? == LegEnd::Observer)
        })
        .collect();
    let k = hits?.iter().filter(|h| **h).count() as u64;
    Ok(Estimate::binomial(k, samples))
}

/// `(1/16)(log P − log r)/log P`, the origin-hitting lower bound without its O(1).
pub fn origin_bound(p: f64, r: f64) -> f64 {
    (p.ln() - r.ln()) / p.ln() / 16.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub zeta: u64,
    pub hit: LatticePoint,
}

/// `ζ(r)` from the origin for `samples` independent walks.
pub fn exit_samples(r: f64, samples: u64, seed: u64, engine: Engine, budget: u64) -> Result<Vec<ExitSample>> {
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut w = walker_for(StreamKey::new(seed, i), 0, LatticePoint::ORIGIN, engine, budget);
            let (hit, zeta) = run_until_hit(&mut w, r)?;
            Ok(ExitSample { zeta, hit })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSummary {
    pub r: f64,
    pub samples: u64,
    pub mean: f64,
    pub std_error: f64,
    /// Mean of `|S_ζ|² − ζ`, zero by optional stopping.
    pub martingale_mean: f64,
    pub martingale_se: f64,
    pub below: f64,
    pub above: f64,
}

impl ExitSummary {
    pub fn tail_fraction(&self) -> f64 {
        self.below + self.above
    }
}

/// Mean exit time and the fraction outside `(r^{2−ε}, r^{2+ε})`.
pub fn exit_summary(r: f64, eps: f64, xs: &[ExitSample]) -> ExitSummary {
    let n = xs.len() as f64;
    let z: Vec<f64> = xs.iter().map(|s| s.zeta as f64).collect();
    let m: Vec<f64> = xs.iter().map(|s| s.hit.norm2() as f64 - s.zeta as f64).collect();
    let (mean, se) = crate::stats::mean_se(&z);
    let (mm, mse) = crate::stats::mean_se(&m);
    let (lo, hi) = (r.powf(2.0 - eps), r.powf(2.0 + eps));
    ExitSummary {
        r,
        samples: xs.len() as u64,
        mean,
        std_error: se,
        martingale_mean: mm,
        martingale_se: mse,
        below: z.iter().filter(|&&t| t <= lo).count() as f64 / n,
        above: z.iter().filter(|&&t| t >= hi).count() as f64 / n,
    }
}

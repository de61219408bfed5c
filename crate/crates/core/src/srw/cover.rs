//! Cover runs with the excursion ledger between `∂D_{2r}` and `∂D_{℘(r)}`.

use serde::{Deserialize, Serialize};

use super::walker::{Engine, FarField, Leg, LegEnd, Observer, Walker};
use super::{walker_for, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, Radius, VisitedGrid};
use crate::rng::StreamKey;
use crate::scales;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitKind {
    Inner,
    Outer,
}

/// Alternating hit times: `s(0)` on the outer circle, then `k(1), s(1), …`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExcursionLedger {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub hits: Vec<(HitKind, f64)>,
}

impl ExcursionLedger {
    pub fn new(inner_radius: f64, outer_radius: f64) -> Self {
        ExcursionLedger { inner_radius, outer_radius, hits: Vec::new() }
    }

    pub fn push(&mut self, kind: HitKind, time: f64) {
        self.hits.push((kind, time));
    }

    /// First hit is outer, kinds alternate, times strictly increase. Past
    /// `2^53` consecutive times may round to the same `f64`.
    pub fn is_valid(&self) -> bool {
        const EXACT: f64 = 9_007_199_254_740_992.0;
        self.hits.iter().enumerate().all(|(i, (k, _))| *k == if i % 2 == 0 { HitKind::Outer } else { HitKind::Inner })
            && self.hits.windows(2).all(|w| w[0].1 < w[1].1 || (w[0].1 == w[1].1 && w[0].1 >= EXACT))
    }

    /// Number of `j ≥ 1` with `s(j) ≤ t`.
    pub fn completed_before(&self, t: f64) -> u32 {
        self.hits.iter().skip(1).filter(|(k, s)| *k == HitKind::Outer && *s <= t).count() as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverOptions {
    pub engine: Engine,
    pub budget: u64,
    /// Landing radius of the return-leg shortcut in units of `r`; `None` disables it.
    pub far_field_factor: Option<f64>,
    /// Ratio between successive cover-radius checkpoints; `None` disables them.
    pub checkpoint_ratio: Option<f64>,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions { engine: Engine::Accelerated, budget: DEFAULT_BUDGET, far_field_factor: Some(8.0), checkpoint_ratio: Some(2.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverRunResult {
    pub r: f64,
    /// `T_r`; infinite when a shortcut time overflowed `f64`.
    pub cover_time: f64,
    pub excursion_count: u32,
    pub wall_steps: u64,
    pub seed: StreamKey,
    pub time_exact: bool,
    pub ledger: ExcursionLedger,
    /// `(n, R_n)` at geometric times up to the cover time.
    pub checkpoints: Vec<(f64, f64)>,
}

struct CoverObserver {
    grid: VisitedGrid,
    next_checkpoint: f64,
    ratio: Option<f64>,
    checkpoints: Vec<(f64, f64)>,
}

impl CoverObserver {
    fn flush_checkpoints(&mut self, upto: f64) {
        if let Some(g) = self.ratio {
            while self.next_checkpoint < upto {
                let c = self.grid.cover_radius().value;
                self.checkpoints.push((self.next_checkpoint, c));
                self.next_checkpoint = (self.next_checkpoint * g).ceil();
            }
        }
    }
}

impl Observer for CoverObserver {
    #[inline]
    fn visit(&mut self, x: i64, y: i64, time: f64) -> bool {
        if time > self.next_checkpoint {
            self.flush_checkpoints(time);
        }
        self.grid.mark_xy(x, y) && self.grid.is_covered()
    }
}

/// Runs the walk from the origin until `D_r` is covered.
pub fn simulate_cover(r: f64, key: StreamKey, opts: &CoverOptions) -> Result<CoverRunResult> {
    if !(r >= 8.0) {
        return Err(Error::invalid(format!("cover runs need r ≥ 8, got {r}")));
    }
    let wp = scales::wp(r)?;
    let disk = Radius::new(r)?;
    let (inner, outer) = (Radius::new(2.0 * r)?, Radius::new(wp)?);
    let mut walker: Walker = walker_for(key, 0, LatticePoint::ORIGIN, opts.engine, opts.budget);
    let mut obs = CoverObserver {
        grid: VisitedGrid::new(disk),
        next_checkpoint: 16.0,
        ratio: opts.checkpoint_ratio,
        checkpoints: Vec::new(),
    };
    if let Some(g) = opts.checkpoint_ratio {
        if !(g > 1.0) {
            return Err(Error::invalid("checkpoint ratio must exceed 1"));
        }
    }
    let out_leg = Leg::new().stop(outer.sq_floor()).watch(disk.sq_floor());
    let far = opts.far_field_factor.map(|f| FarField::for_radius(r, f));
    let back_leg = Leg::new().stop(inner.sq_floor()).far_field(far);
    let mut ledger = ExcursionLedger::new(2.0 * r, wp);

    obs.grid.mark(LatticePoint::ORIGIN);
    loop {
        match walker.run_leg(&out_leg, &mut obs)? {
            LegEnd::Observer => break,
            LegEnd::Stop(_) => ledger.push(HitKind::Outer, walker.time),
        }
        walker.run_leg(&back_leg, &mut super::walker::NoObserver)?;
        ledger.push(HitKind::Inner, walker.time);
    }
    let cover_time = walker.time;
    obs.flush_checkpoints(cover_time);
    obs.checkpoints.push((cover_time, obs.grid.cover_radius().value));
    Ok(CoverRunResult {
        r,
        cover_time,
        excursion_count: ledger.completed_before(cover_time),
        wall_steps: walker.moves,
        seed: key,
        time_exact: walker.time_exact,
        ledger,
        checkpoints: obs.checkpoints,
    })
}

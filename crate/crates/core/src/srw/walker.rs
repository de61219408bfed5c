//! The stepping engine shared by every walk experiment.
//!
//! A leg runs until the walk lands on one of at most two stop boundaries.
//! Every landing point inside the watched disk is reported to an [`Observer`].
//! In accelerated mode the walk jumps through tabulated square boxes whenever
//! no box interior point can touch a stop boundary or the watched disk. Either
//! engine takes the far-field shortcut when the leg carries one.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;

use super::boxes::{self, HALF_WIDTHS};
use crate::error::{Error, Result};
use crate::lattice::{on_boundary_sq, LatticePoint};
use crate::rng::StepRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Direct,
    Accelerated,
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Engine::Direct),
            "accelerated" | "fast" => Ok(Engine::Accelerated),
            _ => Err(Error::config(format!("engine must be direct or accelerated, got {s}"))),
        }
    }
}

/// Replaces a far excursion by the Brownian return law.
///
/// From `|z| ≥ trigger`, the walk is moved to the circle of radius `land`
/// with the exterior Poisson angle. The elapsed time is a draw from a dyadic
/// chain of annulus exits using mean Brownian exit times, so cover times that
/// include a shortcut are approximate.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FarField {
    pub land: f64,
    pub trigger: f64,
}

impl FarField {
    /// Landing radius `factor · r`, trigger at twice that.
    pub fn for_radius(r: f64, factor: f64) -> Self {
        FarField { land: factor * r, trigger: 2.0 * factor * r }
    }
}

/// Angle offset of the exterior Poisson kernel with ratio `q < 1`.
#[inline]
pub fn wrapped_cauchy(q: f64, u: f64) -> f64 {
    2.0 * (((1.0 - q) / (1.0 + q)) * (PI * (u - 0.5)).tan()).atan()
}

/// Mean Brownian exit time of the annulus `a < |x| < b` from radius `s`.
pub fn annulus_mean_exit(a: f64, b: f64, s: f64) -> f64 {
    0.5 * (b * b - s * s) - 0.5 * (b * b - a * a) * (b / s).ln() / (b / a).ln()
}

/// Time in Brownian units to go from radius `s` down to `land` by halving and
/// doubling annuli. Infinite if the chain leaves the range of `f64`, which
/// happens with probability about `1/1000` per call.
pub fn dyadic_return_time<R: Rng>(rng: &mut R, s: f64, land: f64) -> f64 {
    let mut rho = s;
    let mut t = 0.0f64;
    while rho > land * (1.0 + 1e-12) {
        let a = (0.5 * rho).max(land);
        let b = 2.0 * rho;
        if !b.is_finite() || !t.is_finite() {
            return f64::INFINITY;
        }
        t += annulus_mean_exit(a, b, rho);
        let p_in = (b / rho).ln() / (b / a).ln();
        rho = if rng.random::<f64>() < p_in { a } else { b };
    }
    t
}

pub trait Observer {
    /// Called on every landing point inside the watched disk, with the time of
    /// arrival. Returning `true` ends the leg.
    fn visit(&mut self, x: i64, y: i64, time: f64) -> bool;
}

pub struct NoObserver;

impl Observer for NoObserver {
    #[inline]
    fn visit(&mut self, _: i64, _: i64, _: f64) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leg {
    /// Squared-radius floors of the stop boundaries `∂D_s`; `-1` disables a slot.
    pub stops: [i64; 2],
    /// Squared-radius floor of the watched disk; `-1` disables watching.
    pub watch: i64,
    pub far_field: Option<FarField>,
}

impl Leg {
    pub fn new() -> Self {
        Leg { stops: [-1, -1], watch: -1, far_field: None }
    }

    pub fn stop(mut self, sq: i64) -> Self {
        if self.stops[0] < 0 {
            self.stops[0] = sq;
        } else {
            self.stops[1] = sq;
        }
        self
    }

    pub fn watch(mut self, sq: i64) -> Self {
        self.watch = sq;
        self
    }

    pub fn far_field(mut self, f: Option<FarField>) -> Self {
        self.far_field = f;
        self
    }
}

impl Default for Leg {
    fn default() -> Self {
        Leg::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LegEnd {
    /// Landed on the stop boundary in the given slot.
    Stop(usize),
    /// The observer asked to stop.
    Observer,
}

pub struct Walker {
    pub x: i64,
    pub y: i64,
    /// Elapsed walk steps; exact below `2^53` unless a shortcut was taken.
    pub time: f64,
    /// Direct steps plus box jumps plus shortcuts.
    pub moves: u64,
    pub engine: Engine,
    /// Cap on `moves`; walk time itself is heavy tailed.
    pub budget: u64,
    /// False once a shortcut has contributed an approximate duration.
    pub time_exact: bool,
    pub max_box: usize,
    steps: StepRng,
}

const DX: [i64; 4] = [1, -1, 0, 0];
const DY: [i64; 4] = [0, 0, 1, -1];

impl Walker {
    pub fn new(start: LatticePoint, steps: StepRng, engine: Engine, budget: u64) -> Self {
        Walker {
            x: start.x,
            y: start.y,
            time: 0.0,
            moves: 0,
            engine,
            budget,
            time_exact: true,
            max_box: HALF_WIDTHS.len() - 1,
            steps,
        }
    }

    pub fn position(&self) -> LatticePoint {
        LatticePoint::new(self.x, self.y)
    }

    pub fn set_position(&mut self, p: LatticePoint) {
        self.x = p.x;
        self.y = p.y;
    }

    pub fn rng(&mut self) -> &mut rand_chacha::ChaCha8Rng {
        self.steps.inner()
    }

    #[inline]
    fn stopped(&self, leg: &Leg) -> Option<usize> {
        for (i, &s) in leg.stops.iter().enumerate() {
            if s >= 0 && on_boundary_sq(self.x, self.y, s) {
                return Some(i);
            }
        }
        None
    }

    /// Largest box index allowed at the current position.
    fn box_index(&self, leg: &Leg, n2: i64) -> Option<usize> {
        if leg.watch >= 0 && n2 <= leg.watch {
            return None;
        }
        let d = (n2 as f64).sqrt();
        let mut bound = f64::INFINITY;
        let eps = 1e-9;
        if leg.watch >= 0 {
            bound = bound.min((d - (leg.watch as f64).sqrt() - eps) / SQRT_2);
        }
        for &s in &leg.stops {
            if s < 0 {
                continue;
            }
            let sr = (s as f64).sqrt();
            let b = if d > sr + 1.0 {
                (d - sr - 1.0 - eps) / SQRT_2
            } else if d <= sr {
                (sr - d - eps) / SQRT_2
            } else {
                return None;
            };
            bound = bound.min(b);
        }
        boxes::largest_fitting(bound, self.max_box)
    }

    /// Runs one leg. A start already on a stop boundary ends immediately.
    pub fn run_leg<O: Observer>(&mut self, leg: &Leg, obs: &mut O) -> Result<LegEnd> {
        if let Some(i) = self.stopped(leg) {
            return Ok(LegEnd::Stop(i));
        }
        let accel = self.engine == Engine::Accelerated;
        let watch = leg.watch;
        // Within this squared radius no box can be used, so skip the sqrt.
        let near = if watch >= 0 { ((watch as f64).sqrt() + 2.5).powi(2) as i64 } else { -1 };
        let trigger2 = leg.far_field.map_or(i64::MAX, |ff| (ff.trigger * ff.trigger).ceil() as i64);
        loop {
            let n2 = self.x * self.x + self.y * self.y;
            if n2 >= trigger2 {
                if let Some(ff) = leg.far_field {
                    self.shortcut(ff, n2);
                    if let Some(i) = self.stopped(leg) {
                        return Ok(LegEnd::Stop(i));
                    }
                    continue;
                }
            }
            if accel && n2 > near {
                if let Some(bi) = self.box_index(leg, n2) {
                    let (dx, dy, t) = boxes::table(bi).sample(self.steps.inner());
                    self.x += dx;
                    self.y += dy;
                    self.time += t as f64;
                    self.moves += 1;
                    if self.moves > self.budget {
                        return Err(Error::BudgetExceeded { budget: self.budget });
                    }
                    if watch >= 0 && self.x * self.x + self.y * self.y <= watch && obs.visit(self.x, self.y, self.time) {
                        return Ok(LegEnd::Observer);
                    }
                    if let Some(i) = self.stopped(leg) {
                        return Ok(LegEnd::Stop(i));
                    }
                    continue;
                }
            }
            // Direct stepping in bursts; stop checks are cheap integer tests.
            for _ in 0..64 {
                let d = self.steps.dir() as usize;
                self.x += DX[d];
                self.y += DY[d];
                self.time += 1.0;
                self.moves += 1;
                let n2 = self.x * self.x + self.y * self.y;
                if n2 <= watch && obs.visit(self.x, self.y, self.time) {
                    return Ok(LegEnd::Observer);
                }
                if let Some(i) = self.stopped(leg) {
                    return Ok(LegEnd::Stop(i));
                }
                if (accel && n2 > near) || n2 >= trigger2 {
                    break;
                }
            }
            if self.moves > self.budget {
                return Err(Error::BudgetExceeded { budget: self.budget });
            }
        }
    }

    fn shortcut(&mut self, ff: FarField, n2: i64) {
        let s = (n2 as f64).sqrt();
        let q = ff.land / s;
        let rng = self.steps.inner();
        let u: f64 = rng.random();
        let theta = (self.y as f64).atan2(self.x as f64) + wrapped_cauchy(q, u);
        // Brownian time t corresponds to 2t walk steps.
        let t = 2.0 * dyadic_return_time(rng, s, ff.land);
        self.x = (ff.land * theta.cos()).round() as i64;
        self.y = (ff.land * theta.sin()).round() as i64;
        self.time += t;
        self.moves += 1;
        self.time_exact = false;
    }
}

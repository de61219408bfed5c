//! I.i.d. excursion sets, their union processes and the coupling with the
//! walk's own excursions in diagnostic form.
//!
//! An excursion set is `S[0, ζ(℘(r))] ∩ D_r` for a walk started on `∂D_{2r}`.
//! Harmonic starts come from the exact harmonic measure of `∂D_{2r}`. Biased
//! starts, standing in for the conditional residual law `ν`, are the landing
//! points on `∂D_{2r}` of a walk released from the axis point of `∂D_{℘(r)}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::annulus::{self, BoundaryDistribution, SolverOptions};
use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, Radius, VisitedGrid};
use crate::rng::{Lane, StepRng, StreamKey};
use crate::scales;
use crate::srw::walker::{Engine, FarField, Leg, LegEnd, Observer, Walker};
use crate::srw::DEFAULT_BUDGET;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetKind {
    C,
    E,
    F,
    Biased,
}

impl SetKind {
    fn lane(self) -> Lane {
        match self {
            SetKind::C => Lane::CSet,
            SetKind::E => Lane::ESet,
            SetKind::F => Lane::FSet,
            SetKind::Biased => Lane::Biased,
        }
    }
}

impl std::str::FromStr for SetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c" => Ok(SetKind::C),
            "e" => Ok(SetKind::E),
            "f" => Ok(SetKind::F),
            "biased" => Ok(SetKind::Biased),
            _ => Err(Error::config(format!("set kind must be C, E, F or biased, got {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSet {
    pub r: f64,
    pub kind: SetKind,
    pub start: LatticePoint,
    pub covered: Vec<LatticePoint>,
}

/// Radii, the harmonic measure of `∂D_{2r}` and its sampler for one `r`.
pub struct Geometry {
    pub r: f64,
    pub wp: f64,
    pub disk: Radius,
    pub inner: Radius,
    pub outer: Radius,
    pub harmonic: BoundaryDistribution,
    /// Release point of biased starts.
    pub worst_start: LatticePoint,
    sampler: WeightedAliasIndex<f64>,
}

impl Geometry {
    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 8.0) {
            return Err(Error::invalid(format!("excursion sets need r ≥ 8, got {r}")));
        }
        let wp = scales::wp(r)?;
        let rho = 2.0 * r;
        let opts = SolverOptions { size_cap: 8_000_000, ..Default::default() };
        let harmonic = annulus::harmonic_measure(rho, &annulus::default_truncations(rho), &opts)?.distribution;
        let sampler = WeightedAliasIndex::new(harmonic.weights.clone()).map_err(|e| Error::domain(e.to_string()))?;
        Ok(Geometry {
            r,
            wp,
            disk: Radius::new(r)?,
            inner: Radius::new(rho)?,
            outer: Radius::new(wp)?,
            harmonic,
            worst_start: annulus::axis_boundary_point(wp)?,
            sampler,
        })
    }

    pub fn sample_harmonic<R: Rng>(&self, rng: &mut R) -> LatticePoint {
        self.harmonic.support[self.sampler.sample(rng)]
    }
}

static GEOMETRIES: OnceLock<Mutex<HashMap<u64, Arc<Geometry>>>> = OnceLock::new();

/// Shared geometry for `r`, computed on first use.
pub fn geometry(r: f64) -> Result<Arc<Geometry>> {
    let cache = GEOMETRIES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("geometry cache poisoned");
    if let Some(g) = map.get(&r.to_bits()) {
        return Ok(g.clone());
    }
    let g = Arc::new(Geometry::new(r)?);
    map.insert(r.to_bits(), g.clone());
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetOptions {
    pub engine: Engine,
    pub budget: u64,
}

impl Default for SetOptions {
    fn default() -> Self {
        SetOptions { engine: Engine::Accelerated, budget: DEFAULT_BUDGET }
    }
}

/// Marks `D_r` points into a grid, optionally only after a target is visited.
struct Marker<'a> {
    grid: &'a mut VisitedGrid,
    target: Option<LatticePoint>,
    armed: bool,
}

impl Observer for Marker<'_> {
    #[inline]
    fn visit(&mut self, x: i64, y: i64, _: f64) -> bool {
        if !self.armed {
            match self.target {
                Some(t) if t.x == x && t.y == y => self.armed = true,
                _ => return false,
            }
        }
        self.grid.mark_xy(x, y);
        false
    }
}

fn walker(key: StreamKey, lane: Lane, sub: u64, opts: &SetOptions) -> Walker {
    Walker::new(LatticePoint::ORIGIN, StepRng::new(key.rng(lane, sub)), opts.engine, opts.budget)
}

/// Walks from the current position to `∂D_{℘(r)}`, marking visited points of
/// `D_r` from the first visit to `target` on (from the start if `None`).
/// Returns whether the marking was armed.
fn run_excursion(g: &Geometry, w: &mut Walker, grid: &mut VisitedGrid, target: Option<LatticePoint>) -> Result<bool> {
    let start = w.position();
    let armed = target.is_none_or(|t| t == start);
    let watch = match target {
        Some(t) => t.norm2().max(g.disk.sq_floor()),
        None => g.disk.sq_floor(),
    };
    let leg = Leg::new().stop(g.outer.sq_floor()).watch(watch);
    let mut m = Marker { grid, target, armed };
    if m.armed {
        m.grid.mark(start);
    }
    let end = w.run_leg(&leg, &mut m)?;
    debug_assert_eq!(end, LegEnd::Stop(0));
    Ok(m.armed)
}

/// Moves the walker from the worst start to its landing point on `∂D_{2r}`.
fn release_biased(g: &Geometry, w: &mut Walker) -> Result<LatticePoint> {
    w.set_position(g.worst_start);
    let ff = FarField::for_radius(g.r, 8.0);
    w.run_leg(&Leg::new().stop(g.inner.sq_floor()).far_field(Some(ff)), &mut crate::srw::walker::NoObserver)?;
    Ok(w.position())
}

/// Places the walker at the start of set `j` of the given kind.
fn place(g: &Geometry, w: &mut Walker, kind: SetKind) -> Result<LatticePoint> {
    match kind {
        SetKind::Biased => release_biased(g, w),
        _ => {
            let p = g.sample_harmonic(w.rng());
            w.set_position(p);
            Ok(p)
        }
    }
}

/// One excursion set; `key` and `index` select its stream.
pub fn sample_excursion_set(r: f64, kind: SetKind, key: StreamKey, index: u64, opts: &SetOptions) -> Result<ExcursionSet> {
    let g = geometry(r)?;
    let mut grid = VisitedGrid::new(g.disk);
    let mut w = walker(key, kind.lane(), index, opts);
    let start = place(&g, &mut w, kind)?;
    run_excursion(&g, &mut w, &mut grid, None)?;
    Ok(ExcursionSet { r, kind, start, covered: visited_points(&grid) })
}

/// Like [`sample_excursion_set`] but with the start drawn from `start`.
pub fn sample_excursion_set_from(
    r: f64,
    start: &BoundaryDistribution,
    key: StreamKey,
    index: u64,
    opts: &SetOptions,
) -> Result<ExcursionSet> {
    let g = geometry(r)?;
    if start.support.iter().any(|p| !g.inner.on_boundary(*p)) {
        return Err(Error::invalid("start distribution must be supported on ∂D_2r"));
    }
    let alias = WeightedAliasIndex::new(start.weights.clone()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut grid = VisitedGrid::new(g.disk);
    let mut w = walker(key, Lane::Start, index, opts);
    let p = start.support[alias.sample(w.rng())];
    w.set_position(p);
    run_excursion(&g, &mut w, &mut grid, None)?;
    Ok(ExcursionSet { r, kind: SetKind::C, start: p, covered: visited_points(&grid) })
}

fn visited_points(grid: &VisitedGrid) -> Vec<LatticePoint> {
    grid.disk().points().iter().zip(grid.visited_flags()).filter(|(_, v)| **v).map(|(p, _)| *p).collect()
}

/// `S[0, ζ(℘(r))] ∩ D_r` for a walk from the origin: the law of `A(0, r)`.
pub fn origin_excursion(r: f64, key: StreamKey, opts: &SetOptions) -> Result<Vec<LatticePoint>> {
    let g = geometry(r)?;
    let mut grid = VisitedGrid::new(g.disk);
    let mut w = walker(key, Lane::Walk, 0, opts);
    run_excursion(&g, &mut w, &mut grid, None)?;
    Ok(visited_points(&grid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionOutcome {
    pub covered: bool,
    pub uncovered: usize,
}

/// Union of the sets `0..=k` of one kind.
pub fn run_union_process(r: f64, k: u64, kind: SetKind, key: StreamKey, opts: &SetOptions) -> Result<UnionOutcome> {
    let g = geometry(r)?;
    let mut grid = VisitedGrid::new(g.disk);
    for j in 0..=k {
        let mut w = walker(key, kind.lane(), j, opts);
        place(&g, &mut w, kind)?;
        run_excursion(&g, &mut w, &mut grid, None)?;
    }
    Ok(UnionOutcome { covered: grid.is_covered(), uncovered: grid.uncovered() })
}

/// Probability that a Binomial(`m`, `alpha`) variable exceeds 1.
pub fn xi_tail_prob(m: u64, alpha: f64) -> f64 {
    if m < 2 || alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    let log_q = (-alpha).ln_1p();
    let q_m1 = ((m - 1) as f64 * log_q).exp();
    let p0 = q_m1 * (1.0 - alpha);
    let p1 = m as f64 * alpha * q_m1;
    (1.0 - p0 - p1).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptions {
    pub sets: SetOptions,
    /// `c₁`; `None` uses [`default_c1`].
    pub c1: Option<f64>,
    /// At least `⌈u·φ_r⌉` ξ draws are recorded.
    pub u: f64,
    /// Cap on the E, F and coupled sequences.
    pub max_sets: u64,
    /// Forces every ξ to zero.
    pub suppress_xi: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions { sets: SetOptions::default(), c1: None, u: 1.0, max_sets: 100_000, suppress_xi: false }
    }
}

static C1: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();

/// `c₁` fitted from the exact biased-start deviation at `r`, or at the largest
/// `r / 2^k ≥ 8` whose solve fits the default size cap.
pub fn default_c1(r: f64) -> Result<f64> {
    let cache = C1.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().expect("c1 cache poisoned").get(&r.to_bits()) {
        return Ok(*c);
    }
    let opts = SolverOptions::default();
    let mut s = r;
    let c = loop {
        if s < 8.0 {
            return Err(Error::invalid(format!("no feasible c1 fit for r = {r}")));
        }
        let start = annulus::axis_boundary_point(scales::wp(s)?)?;
        match annulus::biased_start_deviation(s, start, &opts) {
            Ok(d) => break d.c1(),
            Err(Error::SizeCap { .. }) => s /= 2.0,
            Err(e) => return Err(e),
        }
    };
    cache.lock().expect("c1 cache poisoned").insert(r.to_bits(), c);
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub r: f64,
    pub c1: f64,
    /// `c₁ / (log r)²`.
    pub alpha: f64,
    pub xi_draws: Vec<bool>,
    /// `0`, then `i_p` if some ξ was drawn as 1 before cover.
    pub discrepancy_indices: Vec<u64>,
    pub m_e: u64,
    pub m_f: Option<u64>,
    pub a_threshold: f64,
    /// Index `ℓ` of the coupled set that completed the cover of `D_r`.
    pub cover_index: u64,
    /// Every point of `A(0, r)` lies in `E(m^E, r)`.
    pub a0_in_e: bool,
}

impl CouplingTrace {
    pub fn m_e_exceeds_a(&self) -> bool {
        self.m_e as f64 > self.a_threshold
    }

    pub fn m_f_exceeds_a(&self) -> Option<bool> {
        self.m_f.map(|m| m as f64 > self.a_threshold)
    }

    /// Whether more than one of the first `m` ξ draws is 1.
    pub fn xi_exceeds_one(&self, m: usize) -> bool {
        self.xi_draws.iter().take(m).filter(|x| **x).count() > 1
    }
}

/// Runs E sets until one contains the origin; returns `m^E`, `A(0, r)` and
/// whether `A(0, r) ⊆ E(m^E, r)`.
fn e_stream(g: &Geometry, key: StreamKey, opts: &SetOptions, max_sets: u64) -> Result<(u64, VisitedGrid, bool)> {
    let leg = Leg::new().stop(g.outer.sq_floor()).watch(g.disk.sq_floor());
    for j in 1..=max_sets {
        let mut w = walker(key, Lane::ESet, j, opts);
        place(g, &mut w, SetKind::E)?;
        let mut e = VisitedGrid::new(g.disk);
        let mut a0 = VisitedGrid::new(g.disk);
        let mut e_obs = Marker { grid: &mut e, target: None, armed: true };
        let mut a_obs = Marker { grid: &mut a0, target: Some(LatticePoint::ORIGIN), armed: false };
        w.run_leg(&leg, &mut Pair(&mut e_obs, &mut a_obs))?;
        if a_obs.armed {
            let inside = a0.visited_flags().iter().zip(e.visited_flags()).all(|(a, e)| !*a || *e);
            return Ok((j, a0, inside));
        }
    }
    Err(Error::BudgetExceeded { budget: max_sets })
}

/// `m^E` and the set `A(0, r)` it produces.
pub fn first_origin_set(r: f64, key: StreamKey, opts: &SetOptions, max_sets: u64) -> Result<(u64, Vec<LatticePoint>)> {
    let g = geometry(r)?;
    let (m, a0, _) = e_stream(&g, key, opts, max_sets)?;
    Ok((m, visited_points(&a0)))
}

/// Runs the coupled construction until the union of the `A(ℓ, r)` covers `D_r`.
pub fn coupled_cover_run(r: f64, key: StreamKey, opts: &CouplingOptions) -> Result<CouplingTrace> {
    let g = geometry(r)?;
    let c1 = match opts.c1 {
        Some(c) => c,
        None => default_c1(r)?,
    };
    let alpha = c1 / r.ln().powi(2);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("c1/(log r)^2 = {alpha} is not a probability")));
    }
    let a_threshold = scales::a_threshold(r)?;
    let min_draws = (opts.u * scales::phi(r)?).ceil() as usize;

    let (m_e, mut union, a0_in_e) = e_stream(&g, key, &opts.sets, opts.max_sets)?;

    let mut xi_rng = key.rng(Lane::Xi, 0);
    let mut xi_draws = Vec::new();
    let mut discrepancy_indices = vec![0];
    let mut m_f = None;
    let mut seen_one = false;
    let mut cover_index = 0;
    let mut l = 0u64;
    while !union.is_covered() {
        l += 1;
        if l > opts.max_sets {
            return Err(Error::BudgetExceeded { budget: opts.max_sets });
        }
        let xi = rng_bernoulli(&mut xi_rng, alpha) && !opts.suppress_xi;
        xi_draws.push(xi);
        let mut w = walker(key, if xi { Lane::Biased } else { Lane::CSet }, l, &opts.sets);
        if !xi {
            place(&g, &mut w, SetKind::C)?;
            run_excursion(&g, &mut w, &mut union, None)?;
        } else if seen_one {
            release_biased(&g, &mut w)?;
            run_excursion(&g, &mut w, &mut union, None)?;
        } else {
            seen_one = true;
            discrepancy_indices.push(l);
            let x = release_biased(&g, &mut w)?;
            let mut found = None;
            for j in 1..=opts.max_sets {
                let mut wf = walker(key, Lane::FSet, j, &opts.sets);
                place(&g, &mut wf, SetKind::F)?;
                let mut trial = union.clone();
                if run_excursion(&g, &mut wf, &mut trial, Some(x))? {
                    union = trial;
                    found = Some(j);
                    break;
                }
            }
            m_f = Some(found.ok_or(Error::BudgetExceeded { budget: opts.max_sets })?);
        }
        cover_index = l;
    }
    while xi_draws.len() < min_draws {
        xi_draws.push(rng_bernoulli(&mut xi_rng, alpha) && !opts.suppress_xi);
    }
    Ok(CouplingTrace { r, c1, alpha, xi_draws, discrepancy_indices, m_e, m_f, a_threshold, cover_index, a0_in_e })
}

fn rng_bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

struct Pair<'a, A, B>(&'a mut A, &'a mut B);

impl<A: Observer, B: Observer> Observer for Pair<'_, A, B> {
    #[inline]
    fn visit(&mut self, x: i64, y: i64, t: f64) -> bool {
        let a = self.0.visit(x, y, t);
        let b = self.1.visit(x, y, t);
        a || b
    }
}

//! Exact discrete potential theory on finite lattice regions.
//!
//! Problems are stored on a padded bounding box with one byte per cell. The
//! linear systems are solved by [`mg::Multigrid`], a deterministic MG-PCG.

pub mod golden;
pub mod mg;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{on_boundary_sq, LatticePoint, Radius};
use mg::Multigrid;

pub const INNER: u32 = 0;
pub const OUTER: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub size_cap: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { size_cap: 1_000_000, tol: 1e-12, max_iter: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Outside,
    Interior,
    Absorbing(u32),
}

const OUTSIDE: u8 = 0;
const INTERIOR: u8 = 1;
const ABSORBING: u8 = 2;

/// A walk killed on a labelled absorbing set.
#[derive(Clone, Debug)]
pub struct AbsorbingProblem {
    x0: i64,
    y0: i64,
    nx: usize,
    ny: usize,
    kind: Vec<u8>,
    slot: Vec<u32>,
    interior_count: usize,
    absorbing: Vec<LatticePoint>,
    labels: Vec<u32>,
    start: LatticePoint,
}

impl AbsorbingProblem {
    /// Builds a problem from explicit point sets.
    pub fn new(interior: &[LatticePoint], absorbing: &[(LatticePoint, u32)], start: LatticePoint) -> Result<Self> {
        let all = interior.iter().chain(absorbing.iter().map(|(p, _)| p));
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for p in all.clone() {
            lo = (lo.0.min(p.x), lo.1.min(p.y));
            hi = (hi.0.max(p.x), hi.1.max(p.y));
        }
        if absorbing.is_empty() {
            return Err(Error::IllPosed("empty absorbing set".into()));
        }
        let mut cells = std::collections::HashMap::new();
        for &p in interior {
            if cells.insert(p, Cell::Interior).is_some() {
                return Err(Error::IllPosed(format!("point {p} listed twice")));
            }
        }
        for &(p, l) in absorbing {
            if cells.insert(p, Cell::Absorbing(l)).is_some() {
                return Err(Error::IllPosed(format!("point {p} listed twice")));
            }
        }
        Self::build(lo, hi, start, usize::MAX, |x, y| {
            cells.get(&LatticePoint::new(x, y)).copied().unwrap_or(Cell::Outside)
        })
    }

    /// Builds a problem by classifying every cell of `[lo, hi]`.
    pub fn build(
        lo: (i64, i64),
        hi: (i64, i64),
        start: LatticePoint,
        cap: usize,
        classify: impl Fn(i64, i64) -> Cell,
    ) -> Result<Self> {
        let (x0, y0) = (lo.0 - 1, lo.1 - 1);
        let nx = (hi.0 - lo.0 + 3) as usize;
        let ny = (hi.1 - lo.1 + 3) as usize;
        let mut kind = vec![OUTSIDE; nx * ny];
        let mut slot = vec![u32::MAX; nx * ny];
        let mut absorbing = Vec::new();
        let mut labels = Vec::new();
        let mut interior_count = 0usize;
        for y in lo.1..=hi.1 {
            for x in lo.0..=hi.0 {
                let k = (y - y0) as usize * nx + (x - x0) as usize;
                match classify(x, y) {
                    Cell::Outside => {}
                    Cell::Interior => {
                        kind[k] = INTERIOR;
                        interior_count += 1;
                        if interior_count > cap {
                            return Err(Error::SizeCap { size: interior_count, cap });
                        }
                    }
                    Cell::Absorbing(l) => {
                        kind[k] = ABSORBING;
                        slot[k] = absorbing.len() as u32;
                        absorbing.push(LatticePoint::new(x, y));
                        labels.push(l);
                    }
                }
            }
        }
        if absorbing.is_empty() {
            return Err(Error::IllPosed("empty absorbing set".into()));
        }
        let prob = AbsorbingProblem { x0, y0, nx, ny, kind, slot, interior_count, absorbing, labels, start };
        for k in 0..nx * ny {
            if prob.kind[k] == INTERIOR {
                for n in [k - 1, k + 1, k - nx, k + nx] {
                    if prob.kind[n] == OUTSIDE {
                        let p = prob.point(k);
                        return Err(Error::IllPosed(format!("interior point {p} has a neighbour outside the problem")));
                    }
                }
            }
        }
        if prob.cell(start) == Cell::Outside {
            return Err(Error::IllPosed(format!("start {start} is not in the problem")));
        }
        Ok(prob)
    }

    /// The region between `∂D_inner` and `∂D_outer` (or all of `D_outer` when
    /// `inner` is `None`), absorbing on both boundaries.
    pub fn annulus(inner: Option<Radius>, outer: Radius, start: LatticePoint, cap: usize) -> Result<Self> {
        if let Some(i) = inner {
            if i.sq_floor() >= outer.sq_floor() {
                return Err(Error::invalid("inner radius must be below outer radius"));
            }
        }
        let e = outer.extent() + 1;
        let (osq, isq) = (outer.sq_floor(), inner.map(|r| r.sq_floor()));
        Self::build((-e, -e), (e, e), start, cap, |x, y| {
            let n2 = x * x + y * y;
            if let Some(isq) = isq {
                if on_boundary_sq(x, y, isq) {
                    return Cell::Absorbing(INNER);
                }
                if n2 <= isq {
                    return Cell::Outside;
                }
            }
            if on_boundary_sq(x, y, osq) {
                Cell::Absorbing(OUTER)
            } else if n2 <= osq {
                Cell::Interior
            } else {
                Cell::Outside
            }
        })
    }

    /// `D_outer` with the origin absorbing (label `INNER`) and `∂D_outer` (label `OUTER`).
    pub fn origin_disk(outer: Radius, start: LatticePoint, cap: usize) -> Result<Self> {
        let e = outer.extent() + 1;
        let osq = outer.sq_floor();
        Self::build((-e, -e), (e, e), start, cap, |x, y| {
            if x == 0 && y == 0 {
                Cell::Absorbing(INNER)
            } else if on_boundary_sq(x, y, osq) {
                Cell::Absorbing(OUTER)
            } else if x * x + y * y <= osq {
                Cell::Interior
            } else {
                Cell::Outside
            }
        })
    }

    pub fn with_start(mut self, start: LatticePoint) -> Result<Self> {
        if self.cell(start) == Cell::Outside {
            return Err(Error::IllPosed(format!("start {start} is not in the problem")));
        }
        self.start = start;
        Ok(self)
    }

    fn index(&self, p: LatticePoint) -> Option<usize> {
        let (i, j) = (p.x - self.x0, p.y - self.y0);
        (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny).then(|| j as usize * self.nx + i as usize)
    }

    fn point(&self, k: usize) -> LatticePoint {
        LatticePoint::new((k % self.nx) as i64 + self.x0, (k / self.nx) as i64 + self.y0)
    }

    pub fn cell(&self, p: LatticePoint) -> Cell {
        match self.index(p) {
            None => Cell::Outside,
            Some(k) => match self.kind[k] {
                INTERIOR => Cell::Interior,
                ABSORBING => Cell::Absorbing(self.labels[self.slot[k] as usize]),
                _ => Cell::Outside,
            },
        }
    }

    pub fn interior_len(&self) -> usize {
        self.interior_count
    }

    pub fn absorbing(&self) -> &[LatticePoint] {
        &self.absorbing
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn start(&self) -> LatticePoint {
        self.start
    }

    fn check_cap(&self, opts: &SolverOptions) -> Result<()> {
        if self.interior_count > opts.size_cap {
            return Err(Error::SizeCap { size: self.interior_count, cap: opts.size_cap });
        }
        Ok(())
    }

    fn mask(&self) -> Vec<bool> {
        self.kind.iter().map(|&k| k == INTERIOR).collect()
    }

    /// Sums `0.25 * field` over the interior neighbours of every absorbing point.
    fn absorbed(&self, field: &[f64]) -> Vec<f64> {
        let nx = self.nx;
        self.absorbing
            .iter()
            .map(|&a| {
                let k = self.index(a).unwrap();
                let mut s = 0.0;
                for n in [k.wrapping_sub(1), k + 1, k.wrapping_sub(nx), k + nx] {
                    if n < self.kind.len() && self.kind[n] == INTERIOR {
                        s += field[n];
                    }
                }
                0.25 * s
            })
            .collect()
    }
}

/// A probability measure on an enumerated lattice set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDistribution {
    pub support: Vec<LatticePoint>,
    pub weights: Vec<f64>,
}

impl BoundaryDistribution {
    pub fn new(support: Vec<LatticePoint>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() || support.is_empty() {
            return Err(Error::invalid("support and weights must be nonempty and of equal length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(BoundaryDistribution { support, weights })
    }

    pub fn point_mass(p: LatticePoint) -> Self {
        BoundaryDistribution { support: vec![p], weights: vec![1.0] }
    }

    pub fn uniform(support: Vec<LatticePoint>) -> Self {
        let w = 1.0 / support.len() as f64;
        let weights = vec![w; support.len()];
        BoundaryDistribution { support, weights }
    }

    pub fn weight_of(&self, p: LatticePoint) -> f64 {
        self.support.iter().position(|&q| q == p).map_or(0.0, |i| self.weights[i])
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Largest weight change under the 8 lattice symmetries.
    pub fn symmetry_defect(&self) -> f64 {
        let map: std::collections::HashMap<_, _> = self.support.iter().copied().zip(self.weights.iter().copied()).collect();
        let mut worst = 0.0f64;
        for (&p, &w) in &map {
            for k in 1..8 {
                let q = map.get(&p.dihedral(k)).copied().unwrap_or(0.0);
                worst = worst.max((w - q).abs());
            }
        }
        worst
    }

    pub fn total_variation(&self, other: &BoundaryDistribution) -> f64 {
        let mut map: std::collections::HashMap<LatticePoint, f64> = std::collections::HashMap::new();
        for (p, w) in self.support.iter().zip(&self.weights) {
            *map.entry(*p).or_default() += w;
        }
        for (p, w) in other.support.iter().zip(&other.weights) {
            *map.entry(*p).or_default() -= w;
        }
        0.5 * map.values().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct HittingLaw {
    pub distribution: BoundaryDistribution,
    pub labels: Vec<u32>,
    /// Mean-value defect of the Green's function.
    pub residual: f64,
    pub iterations: usize,
}

impl HittingLaw {
    pub fn mass(&self, label: u32) -> f64 {
        self.labels.iter().zip(&self.distribution.weights).filter(|(l, _)| **l == label).map(|(_, w)| w).sum()
    }
}

/// Absorption law of the walk from `problem.start`.
pub fn exact_hitting_distribution(problem: &AbsorbingProblem, opts: &SolverOptions) -> Result<HittingLaw> {
    problem.check_cap(opts)?;
    let start = problem.start;
    if let Cell::Absorbing(_) = problem.cell(start) {
        let weights = problem.absorbing.iter().map(|&a| if a == start { 1.0 } else { 0.0 }).collect();
        return Ok(HittingLaw {
            distribution: BoundaryDistribution { support: problem.absorbing.clone(), weights },
            labels: problem.labels.clone(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut b = vec![0.0; problem.kind.len()];
    b[problem.index(start).unwrap()] = 4.0;
    let mut mg = Multigrid::new(problem.nx, problem.ny, problem.mask());
    let (g, st) = mg.solve(&b, opts.tol, opts.max_iter)?;
    let weights = problem.absorbed(&g);
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok(HittingLaw {
        distribution: BoundaryDistribution { support: problem.absorbing.clone(), weights },
        labels: problem.labels.clone(),
        residual: st.residual,
        iterations: st.iterations,
    })
}

/// Solution of a Dirichlet problem over the whole region.
#[derive(Clone, Debug)]
pub struct HarmonicField {
    problem_index: (i64, i64, usize),
    values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl HarmonicField {
    pub fn at(&self, p: LatticePoint) -> f64 {
        let (x0, y0, nx) = self.problem_index;
        let (i, j) = (p.x - x0, p.y - y0);
        if i < 0 || j < 0 || i as usize >= nx {
            return 0.0;
        }
        self.values.get(j as usize * nx + i as usize).copied().unwrap_or(0.0)
    }
}

/// Solves `u = average of neighbours` on the interior with `u = data(label)`
/// on the absorbing set. Values off the interior are reported as the data.
pub fn solve_dirichlet(problem: &AbsorbingProblem, data: impl Fn(u32) -> f64, opts: &SolverOptions) -> Result<HarmonicField> {
    problem.check_cap(opts)?;
    let nx = problem.nx;
    let n = problem.kind.len();
    let mut b = vec![0.0; n];
    for k in 0..n {
        if problem.kind[k] == INTERIOR {
            for m in [k - 1, k + 1, k - nx, k + nx] {
                if problem.kind[m] == ABSORBING {
                    b[k] += data(problem.labels[problem.slot[m] as usize]);
                }
            }
        }
    }
    let mut mg = Multigrid::new(problem.nx, problem.ny, problem.mask());
    let (mut u, st) = mg.solve(&b, opts.tol, opts.max_iter)?;
    for k in 0..n {
        if problem.kind[k] == ABSORBING {
            u[k] = data(problem.labels[problem.slot[k] as usize]);
        }
    }
    Ok(HarmonicField { problem_index: (problem.x0, problem.y0, nx), values: u, residual: st.residual, iterations: st.iterations })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitProb {
    pub value: f64,
    /// `(log P − log r) / (log P − log ρ)`.
    pub leading: f64,
    pub residual: f64,
}

impl HitProb {
    pub fn deviation(&self) -> f64 {
        self.value - self.leading
    }
}

pub fn leading_term(rho: f64, r: f64, p: f64) -> f64 {
    (p.ln() - r.ln()) / (p.ln() - rho.ln())
}

/// Probability that the walk from `start` hits `∂D_ρ` before `∂D_P`.
pub fn exact_hit_prob(rho: f64, r: f64, p: f64, start: LatticePoint, opts: &SolverOptions) -> Result<HitProb> {
    if !(0.0 < rho && rho < r && r < p) {
        return Err(Error::invalid(format!("need 0 < ρ < r < P, got ({rho}, {r}, {p})")));
    }
    let rr = Radius::new(r)?;
    if !rr.on_boundary(start) {
        return Err(Error::invalid(format!("start {start} is not on the boundary of D_{r}")));
    }
    let prob = AbsorbingProblem::annulus(Some(Radius::new(rho)?), Radius::new(p)?, start, opts.size_cap)?;
    let field = solve_dirichlet(&prob, |l| if l == INNER { 1.0 } else { 0.0 }, opts)?;
    Ok(HitProb { value: field.at(start), leading: leading_term(rho, r, p), residual: field.residual })
}

/// Probability that the walk from `start` visits the origin before `∂D_P`.
pub fn exact_hit_origin_prob(p: f64, start: LatticePoint, opts: &SolverOptions) -> Result<HitProb> {
    let prob = AbsorbingProblem::origin_disk(Radius::new(p)?, start, opts.size_cap)?;
    let field = solve_dirichlet(&prob, |l| if l == INNER { 1.0 } else { 0.0 }, opts)?;
    let r = start.norm();
    Ok(HitProb { value: field.at(start), leading: (p.ln() - r.ln()) / p.ln() / 16.0, residual: field.residual })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicMeasure {
    pub distribution: BoundaryDistribution,
    pub truncations: Vec<f64>,
    /// Total variation between successive truncations.
    pub tv_steps: Vec<f64>,
    /// Largest pointwise change between the two largest truncations.
    pub max_change: f64,
    pub converged: bool,
    pub residual: f64,
}

/// Escape law from `∂D_r` to `∂D_M`, which is the hitting law of `∂D_r`
/// from a symmetric start on `∂D_M` up to the last-exit decomposition.
fn escape_law(r: Radius, m: f64, opts: &SolverOptions) -> Result<(Vec<LatticePoint>, Vec<f64>, f64)> {
    let outer = Radius::new(m)?;
    let prob = AbsorbingProblem::annulus(Some(r), outer, LatticePoint::new(outer.extent(), 0), opts.size_cap)?;
    let field = solve_dirichlet(&prob, |l| if l == OUTER { 1.0 } else { 0.0 }, opts)?;
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (&a, &l) in prob.absorbing.iter().zip(&prob.labels) {
        if l == INNER {
            let e: f64 = a
                .neighbors()
                .iter()
                .map(|&w| match prob.cell(w) {
                    Cell::Interior => field.at(w),
                    Cell::Absorbing(OUTER) => 1.0,
                    _ => 0.0,
                })
                .sum();
            support.push(a);
            weights.push(0.25 * e);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((support, weights, field.residual))
}

fn symmetrize(support: &[LatticePoint], weights: &mut [f64]) {
    let pos: std::collections::HashMap<_, _> = support.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let orig = weights.to_vec();
    for (i, p) in support.iter().enumerate() {
        let mut s = 0.0;
        for k in 0..8 {
            s += orig[pos[&p.dihedral(k)]];
        }
        weights[i] = s / 8.0;
    }
}

/// Harmonic measure of `∂D_r` from infinity, extrapolated linearly in `1/log M`.
pub fn harmonic_measure(r: f64, truncations: &[f64], opts: &SolverOptions) -> Result<HarmonicMeasure> {
    if truncations.is_empty() || truncations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("truncation radii must be nonempty and increasing"));
    }
    if truncations[0] < 8.0 * r {
        return Err(Error::invalid(format!("smallest truncation radius must be at least 8r = {}", 8.0 * r)));
    }
    let rad = Radius::new(r)?;
    let mut laws = Vec::new();
    let mut residual = 0.0f64;
    let mut support = Vec::new();
    for &m in truncations {
        let (s, mut w, res) = escape_law(rad, m, opts)?;
        symmetrize(&s, &mut w);
        residual = residual.max(res);
        support = s;
        laws.push(w);
    }
    let tv_steps: Vec<f64> = laws
        .windows(2)
        .map(|w| 0.5 * w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .collect();
    let converged = tv_steps.windows(2).all(|w| w[1] <= w[0]);
    let n = laws.len();
    let (weights, max_change) = if n == 1 {
        (laws[0].clone(), f64::NAN)
    } else {
        let (h1, h2) = (&laws[n - 2], &laws[n - 1]);
        let (t1, t2) = (1.0 / truncations[n - 2].ln(), 1.0 / truncations[n - 1].ln());
        let mut w: Vec<f64> = h1.iter().zip(h2).map(|(a, b)| (b + (b - a) * t2 / (t1 - t2)).max(0.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let mc = h1.iter().zip(h2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        (w, mc)
    };
    Ok(HarmonicMeasure {
        distribution: BoundaryDistribution { support, weights },
        truncations: truncations.to_vec(),
        tv_steps,
        max_change,
        converged,
        residual,
    })
}

/// Default truncations for the harmonic measure of `∂D_ρ`.
pub fn default_truncations(rho: f64) -> Vec<f64> {
    vec![8.0 * rho, 16.0 * rho]
}

/// The lattice point of `∂D_r` on the positive x-axis.
pub fn axis_boundary_point(r: f64) -> Result<LatticePoint> {
    Ok(LatticePoint::new(Radius::new(r)?.extent() + 1, 0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiasedDeviation {
    pub r: f64,
    pub start: LatticePoint,
    /// `max_x |μ(x) − H(x)| / H(x)` over `∂D_{2r}`.
    pub deviation: f64,
    pub mu: BoundaryDistribution,
    pub harmonic: BoundaryDistribution,
    pub residual: f64,
}

impl BiasedDeviation {
    /// `deviation · (log r)²`, the fitted constant `c₁`.
    pub fn c1(&self) -> f64 {
        self.deviation * self.r.ln().powi(2)
    }
}

fn poisson_exterior(q: f64, theta: f64) -> f64 {
    (1.0 - q * q) / (1.0 + q * q - 2.0 * q * theta.cos()) / (2.0 * PI)
}

/// Deviation of the `∂D_{2r}` hitting law from `start` relative to harmonic measure.
///
/// The walk is solved exactly inside `D_M`, `M = ⌈1.5|start|⌉`. Mass escaping to
/// `∂D_M` is returned to `∂D_{2r}` through the continuum exterior Poisson
/// kernel applied as a density against the lattice harmonic measure.
pub fn biased_start_deviation(r: f64, start: LatticePoint, opts: &SolverOptions) -> Result<BiasedDeviation> {
    if r < 8.0 {
        return Err(Error::invalid("biased start deviation needs r ≥ 8"));
    }
    let rho = 2.0 * r;
    if start.norm() <= rho + 1.0 {
        return Err(Error::invalid("start must lie well outside ∂D_2r"));
    }
    let hm = harmonic_measure(rho, &default_truncations(rho), opts)?;
    let h = hm.distribution;
    let m = (1.5 * start.norm()).ceil();
    let prob = AbsorbingProblem::annulus(Some(Radius::new(rho)?), Radius::new(m)?, start, opts.size_cap)?;
    let law = exact_hitting_distribution(&prob, opts)?;
    let pos: std::collections::HashMap<_, _> = h.support.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let mut mu = vec![0.0; h.support.len()];
    let angles: Vec<f64> = h.support.iter().map(|p| p.angle()).collect();
    let mut kernel = vec![0.0; h.support.len()];
    for ((&a, &l), &w) in law.distribution.support.iter().zip(&law.labels).zip(&law.distribution.weights) {
        if w == 0.0 {
            continue;
        }
        if l == INNER {
            mu[pos[&a]] += w;
        } else {
            let q = rho / a.norm();
            let ta = a.angle();
            let mut tot = 0.0;
            for (i, k) in kernel.iter_mut().enumerate() {
                *k = h.weights[i] * poisson_exterior(q, angles[i] - ta);
                tot += *k;
            }
            for (i, k) in kernel.iter().enumerate() {
                mu[i] += w * k / tot;
            }
        }
    }
    let deviation = mu.iter().zip(&h.weights).fold(0.0f64, |d, (m, hw)| d.max((m - hw).abs() / hw));
    Ok(BiasedDeviation {
        r,
        start,
        deviation,
        mu: BoundaryDistribution { support: h.support.clone(), weights: mu },
        harmonic: h,
        residual: law.residual.max(hm.residual),
    })
}

//! Discrete disks, their outer boundaries, and coverage bookkeeping on ℤ².
//!
//! Membership is decided with integer arithmetic only. A [`Radius`] carries
//! `⌊r²⌋`, and `x² + y² ≤ ⌊r²⌋` is equivalent to `x² + y² ≤ r²` because the
//! left side is an integer.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, serde::Serialize, serde::Deserialize)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        LatticePoint { x, y }
    }

    #[inline]
    pub fn norm2(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn neighbors(self) -> [LatticePoint; 4] {
        let LatticePoint { x, y } = self;
        [
            LatticePoint::new(x + 1, y),
            LatticePoint::new(x - 1, y),
            LatticePoint::new(x, y + 1),
            LatticePoint::new(x, y - 1),
        ]
    }

    /// Image under element `k` (mod 8) of the dihedral group of the square.
    pub fn dihedral(self, k: u8) -> LatticePoint {
        let LatticePoint { x, y } = self;
        let (x, y) = if k & 4 != 0 { (y, x) } else { (x, y) };
        let x = if k & 1 != 0 { -x } else { x };
        let y = if k & 2 != 0 { -y } else { y };
        LatticePoint::new(x, y)
    }

    pub fn rotate90(self) -> LatticePoint {
        LatticePoint::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        (self.y as f64).atan2(self.x as f64)
    }
}

impl std::ops::Add for LatticePoint {
    type Output = LatticePoint;
    fn add(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl std::fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A disk radius with its squared floor precomputed for exact membership tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Radius {
    value: f64,
    sq: i64,
}

impl Radius {
    pub fn new(r: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::invalid(format!("radius must be finite and nonnegative, got {r}")));
        }
        let sq = (r * r).floor();
        if sq > 4.0e18 {
            return Err(Error::invalid(format!("radius {r} too large for exact lattice arithmetic")));
        }
        Ok(Radius { value: r, sq: sq as i64 })
    }

    /// Radius whose square is the integer `sq` exactly.
    pub fn from_square(sq: i64) -> Result<Self> {
        if sq < 0 {
            return Err(Error::invalid(format!("squared radius must be nonnegative, got {sq}")));
        }
        Ok(Radius { value: (sq as f64).sqrt(), sq })
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn sq_floor(self) -> i64 {
        self.sq
    }

    /// Largest coordinate magnitude a disk point can have.
    pub fn extent(self) -> i64 {
        isqrt(self.sq)
    }

    #[inline]
    pub fn contains(self, p: LatticePoint) -> bool {
        p.norm2() <= self.sq
    }

    #[inline]
    pub fn on_boundary(self, p: LatticePoint) -> bool {
        on_boundary_sq(p.x, p.y, self.sq)
    }
}

/// `(x, y) ∉ D` and its nearest neighbour is in `D`, where `D = {x² + y² ≤ sq}`.
#[inline]
pub fn on_boundary_sq(x: i64, y: i64, sq: i64) -> bool {
    let n2 = x * x + y * y;
    n2 > sq && n2 - 2 * x.abs().max(y.abs()) + 1 <= sq
}

pub fn isqrt(n: i64) -> i64 {
    if n <= 0 {
        return 0;
    }
    let mut s = (n as f64).sqrt() as i64;
    while s * s > n {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    s
}

/// Lattice points of `D_r`, sorted by `(y, x)`.
pub fn disk_points(r: f64) -> Result<Vec<LatticePoint>> {
    let rad = Radius::new(r)?;
    let e = rad.extent();
    let mut out = Vec::new();
    for y in -e..=e {
        for x in -e..=e {
            let p = LatticePoint::new(x, y);
            if rad.contains(p) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Points of `∂D_r`: outside `D_r` with a 4-neighbour inside, sorted by `(y, x)`.
pub fn boundary_points(r: f64) -> Result<Vec<LatticePoint>> {
    let rad = Radius::new(r)?;
    Ok(boundary_of(rad))
}

pub fn boundary_of(rad: Radius) -> Vec<LatticePoint> {
    let e = rad.extent() + 1;
    let mut out = Vec::new();
    for y in -e..=e {
        for x in -e..=e {
            if on_boundary_sq(x, y, rad.sq) {
                out.push(LatticePoint::new(x, y));
            }
        }
    }
    out
}

/// Dense index over the points of one disk.
#[derive(Clone, Debug)]
pub struct DiskIndex {
    radius: Radius,
    half: i64,
    side: i64,
    slot: Vec<u32>,
    points: Vec<LatticePoint>,
}

const NO_SLOT: u32 = u32::MAX;

impl DiskIndex {
    pub fn new(radius: Radius) -> Self {
        let half = radius.extent();
        let side = 2 * half + 1;
        let mut slot = vec![NO_SLOT; (side * side) as usize];
        let mut points = Vec::new();
        for y in -half..=half {
            for x in -half..=half {
                let p = LatticePoint::new(x, y);
                if radius.contains(p) {
                    slot[((y + half) * side + x + half) as usize] = points.len() as u32;
                    points.push(p);
                }
            }
        }
        DiskIndex { radius, half, side, slot, points }
    }

    pub fn radius(&self) -> Radius {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    #[inline]
    pub fn index_of(&self, x: i64, y: i64) -> Option<usize> {
        if x.abs() > self.half || y.abs() > self.half {
            return None;
        }
        let s = self.slot[((y + self.half) * self.side + x + self.half) as usize];
        (s != NO_SLOT).then_some(s as usize)
    }
}

/// Outcome of [`VisitedGrid::cover_radius`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverRadius {
    pub value: f64,
    /// Every tracked point is visited, so `value` is only a lower bound.
    pub saturated: bool,
}

/// Occupancy flags over `D_extent` with an uncovered count.
#[derive(Clone, Debug)]
pub struct VisitedGrid {
    index: DiskIndex,
    visited: Vec<bool>,
    uncovered: usize,
    by_norm: Vec<u32>,
    frontier: usize,
}

impl VisitedGrid {
    pub fn new(extent: Radius) -> Self {
        let index = DiskIndex::new(extent);
        let n = index.len();
        let mut by_norm: Vec<u32> = (0..n as u32).collect();
        by_norm.sort_by_key(|&i| (index.points[i as usize].norm2(), i));
        VisitedGrid { index, visited: vec![false; n], uncovered: n, by_norm, frontier: 0 }
    }

    pub fn extent(&self) -> Radius {
        self.index.radius
    }

    pub fn disk(&self) -> &DiskIndex {
        &self.index
    }

    pub fn uncovered(&self) -> usize {
        self.uncovered
    }

    pub fn is_covered(&self) -> bool {
        self.uncovered == 0
    }

    /// Marks `p`; returns true if it is a tracked point that was not yet visited.
    #[inline]
    pub fn mark(&mut self, p: LatticePoint) -> bool {
        self.mark_xy(p.x, p.y)
    }

    #[inline]
    pub fn mark_xy(&mut self, x: i64, y: i64) -> bool {
        match self.index.index_of(x, y) {
            Some(i) => self.mark_index(i),
            None => false,
        }
    }

    #[inline]
    pub fn mark_index(&mut self, i: usize) -> bool {
        if self.visited[i] {
            false
        } else {
            self.visited[i] = true;
            self.uncovered -= 1;
            true
        }
    }

    pub fn is_visited(&self, p: LatticePoint) -> bool {
        self.index.index_of(p.x, p.y).is_some_and(|i| self.visited[i])
    }

    pub fn visited_flags(&self) -> &[bool] {
        &self.visited
    }

    /// `sup{ρ : D_ρ ⊆ visited}`: the norm of the nearest unvisited point.
    pub fn cover_radius(&mut self) -> CoverRadius {
        while self.frontier < self.by_norm.len() && self.visited[self.by_norm[self.frontier] as usize] {
            self.frontier += 1;
        }
        match self.by_norm.get(self.frontier) {
            Some(&i) => CoverRadius { value: self.index.points[i as usize].norm(), saturated: false },
            None => CoverRadius { value: self.index.radius.value, saturated: true },
        }
    }

    pub fn clear(&mut self) {
        self.visited.iter_mut().for_each(|v| *v = false);
        self.uncovered = self.visited.len();
        self.frontier = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn brute_disk(r: f64) -> BTreeSet<(i64, i64)> {
        let e = r.ceil() as i64 + 1;
        let mut s = BTreeSet::new();
        for x in -e..=e {
            for y in -e..=e {
                if ((x * x + y * y) as f64) <= r * r {
                    s.insert((x, y));
                }
            }
        }
        s
    }

    fn brute_boundary(r: f64) -> BTreeSet<(i64, i64)> {
        let d = brute_disk(r);
        let e = r.ceil() as i64 + 2;
        let mut s = BTreeSet::new();
        for x in -e..=e {
            for y in -e..=e {
                if !d.contains(&(x, y))
                    && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| d.contains(&(x + dx, y + dy)))
                {
                    s.insert((x, y));
                }
            }
        }
        s
    }

    fn as_set(v: &[LatticePoint]) -> BTreeSet<(i64, i64)> {
        v.iter().map(|p| (p.x, p.y)).collect()
    }

    #[test]
    fn small_disks() {
        assert_eq!(disk_points(0.0).unwrap(), vec![LatticePoint::ORIGIN]);
        assert_eq!(as_set(&disk_points(1.0).unwrap()), [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)].into());
        assert_eq!(disk_points(2.0).unwrap().len(), 13);
        assert!(disk_points(-1.0).is_err());
    }

    #[test]
    fn small_boundaries() {
        assert_eq!(as_set(&boundary_points(0.0).unwrap()), [(1, 0), (-1, 0), (0, 1), (0, -1)].into());
        assert_eq!(
            as_set(&boundary_points(1.0).unwrap()),
            [(2, 0), (-2, 0), (0, 2), (0, -2), (1, 1), (1, -1), (-1, 1), (-1, -1)].into()
        );
        let b2 = boundary_points(2.0).unwrap();
        assert_eq!(as_set(&b2), brute_boundary(2.0));
        let s = as_set(&b2);
        for k in 0..8 {
            assert!(b2.iter().all(|p| {
                let q = p.dihedral(k);
                s.contains(&(q.x, q.y))
            }));
        }
    }

    #[test]
    fn disk_area_ratio() {
        for r in [50.0, 64.5, 100.0] {
            let n = disk_points(r).unwrap().len() as f64;
            let ratio = n / (std::f64::consts::PI * r * r);
            assert!((ratio - 1.0).abs() < 0.05, "r={r} ratio={ratio}");
        }
    }

    #[test]
    fn cover_radius_examples() {
        let mut g = VisitedGrid::new(Radius::new(5.0).unwrap());
        assert_eq!(g.cover_radius(), CoverRadius { value: 0.0, saturated: false });
        g.mark(LatticePoint::ORIGIN);
        assert_eq!(g.cover_radius().value, 1.0);
        for p in disk_points(2.0).unwrap() {
            g.mark(p);
        }
        assert_eq!(g.cover_radius().value, 5f64.sqrt());
        for p in disk_points(5.0).unwrap() {
            g.mark(p);
        }
        let c = g.cover_radius();
        assert!(c.saturated && c.value == 5.0);
        assert_eq!(g.uncovered(), 0);
    }

    #[test]
    fn isqrt_exact() {
        for n in 0..10_000i64 {
            let s = isqrt(n);
            assert!(s * s <= n && (s + 1) * (s + 1) > n);
        }
        assert_eq!(isqrt(i64::MAX / 4), 1_518_500_249);
    }

    proptest! {
        #[test]
        fn disk_and_boundary_match_brute_force(r in 0.0f64..12.0) {
            let d = disk_points(r).unwrap();
            let b = boundary_points(r).unwrap();
            prop_assert_eq!(as_set(&d), brute_disk(r));
            prop_assert_eq!(as_set(&b), brute_boundary(r));
            let ds = as_set(&d);
            prop_assert!(b.iter().all(|p| !ds.contains(&(p.x, p.y))));
        }

        #[test]
        fn sets_are_dihedral_invariant(r in 0.0f64..20.0, k in 0u8..8) {
            let d = as_set(&disk_points(r).unwrap());
            let b = as_set(&boundary_points(r).unwrap());
            for &(x, y) in &d {
                let q = LatticePoint::new(x, y).dihedral(k);
                prop_assert!(d.contains(&(q.x, q.y)));
            }
            for &(x, y) in &b {
                let q = LatticePoint::new(x, y).dihedral(k);
                prop_assert!(b.contains(&(q.x, q.y)));
            }
        }

        #[test]
        fn disk_count_monotone(r in 0.0f64..30.0, dr in 0.0f64..3.0) {
            prop_assert!(disk_points(r).unwrap().len() <= disk_points(r + dr).unwrap().len());
        }

        #[test]
        fn marking_is_idempotent_and_radius_monotone(pts in proptest::collection::vec((-6i64..=6, -6i64..=6), 0..80)) {
            let mut g = VisitedGrid::new(Radius::new(6.0).unwrap());
            let mut last = g.cover_radius().value;
            for (x, y) in pts {
                let first = g.mark_xy(x, y);
                prop_assert!(!g.mark_xy(x, y));
                let _ = first;
                let c = g.cover_radius().value;
                prop_assert!(c >= last);
                last = c;
                let unvisited = g.visited_flags().iter().filter(|v| !**v).count();
                prop_assert_eq!(unvisited, g.uncovered());
            }
        }
    }
}

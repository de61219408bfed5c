use std::collections::HashMap;

use covlab_core::annulus::BoundaryDistribution;
use covlab_core::coupling::{self, CouplingOptions, SetKind, SetOptions};
use covlab_core::lattice::LatticePoint;
use covlab_core::rng::StreamKey;
use covlab_core::scales;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn frequencies(sets: &[Vec<LatticePoint>]) -> HashMap<LatticePoint, f64> {
    let mut f = HashMap::new();
    for s in sets {
        for p in s {
            *f.entry(*p).or_insert(0.0) += 1.0;
        }
    }
    f.values_mut().for_each(|v| *v /= sets.len() as f64);
    f
}

/// Largest pooled two-sample z over the points, and the Bonferroni critical
/// value for a family-wise level of 0.0027 (the two-sided 3σ level).
fn max_pointwise_z(a: &[Vec<LatticePoint>], b: &[Vec<LatticePoint>], points: &[LatticePoint]) -> (f64, f64) {
    let (fa, fb) = (frequencies(a), frequencies(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut worst = 0.0f64;
    for p in points {
        let (x, y) = (fa.get(p).copied().unwrap_or(0.0), fb.get(p).copied().unwrap_or(0.0));
        let pooled = (x * na + y * nb) / (na + nb);
        let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
        if se > 0.0 {
            worst = worst.max(((x - y) / se).abs());
        }
    }
    let crit = Normal::standard().inverse_cdf(1.0 - 0.00135 / points.len() as f64);
    (worst, crit)
}

#[test]
fn origin_coverage_respects_lower_bound() {
    let r = 30.0;
    let n = 10_000u64;
    let hits: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = coupling::sample_excursion_set(r, SetKind::C, StreamKey::new(21, i), 0, &SetOptions::default()).unwrap();
            s.covered.contains(&LatticePoint::ORIGIN)
        })
        .collect();
    let p = hits.iter().filter(|h| **h).count() as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let wp = scales::wp(r).unwrap();
    let bound = (wp.ln() - (2.0 * r).ln()) / wp.ln() / 16.0;
    assert!(p >= bound - 3.0 * se, "p={p} bound={bound}");
}

#[test]
fn rotated_harmonic_start_gives_rotated_coverage() {
    let r = 16.0;
    let n = 4000u64;
    let g = coupling::geometry(r).unwrap();
    let h = g.harmonic.clone();
    let rot = BoundaryDistribution::new(h.support.iter().map(|p| p.rotate90()).collect(), h.weights.clone()).unwrap();
    let o = SetOptions::default();
    let run = |d: &BoundaryDistribution, seed: u64| -> Vec<Vec<LatticePoint>> {
        (0..n)
            .into_par_iter()
            .map(|i| coupling::sample_excursion_set_from(r, d, StreamKey::new(seed, i), 0, &o).unwrap().covered)
            .collect()
    };
    let (a, b) = (run(&h, 31), run(&rot, 32));
    let points = covlab_core::lattice::disk_points(r).unwrap();
    let (z, crit) = max_pointwise_z(&a, &b, &points);
    assert!(z < crit, "max z {z} vs {crit}");
}

#[test]
fn first_excursion_marginal_is_preserved() {
    let r = 16.0;
    let n = 10_000u64;
    let o = SetOptions::default();
    let from_e: Vec<Vec<LatticePoint>> =
        (0..n).into_par_iter().map(|i| coupling::first_origin_set(r, StreamKey::new(41, i), &o, 100_000).unwrap().1).collect();
    let direct: Vec<Vec<LatticePoint>> =
        (0..n).into_par_iter().map(|i| coupling::origin_excursion(r, StreamKey::new(42, i), &o).unwrap()).collect();
    let points = covlab_core::lattice::disk_points(r).unwrap();
    let (z, crit) = max_pointwise_z(&from_e, &direct, &points);
    assert!(z < crit, "max z {z} vs {crit}");

    // With ξ suppressed every later coupled set is a C set.
    let opts = CouplingOptions { suppress_xi: true, c1: Some(1.0), ..Default::default() };
    for i in 0..20 {
        let t = coupling::coupled_cover_run(r, StreamKey::new(43, i), &opts).unwrap();
        assert!(t.xi_draws.iter().all(|x| !x) && t.m_f.is_none() && t.discrepancy_indices == vec![0]);
    }
}

#[test]
fn m_e_has_geometric_tail() {
    let r = 30.0;
    let o = SetOptions::default();
    let n0 = 10_000u64;
    let p0 = (0..n0)
        .into_par_iter()
        .filter(|&i| {
            coupling::sample_excursion_set(r, SetKind::E, StreamKey::new(51, i), 0, &o).unwrap().covered.contains(&LatticePoint::ORIGIN)
        })
        .count() as f64
        / n0 as f64;
    let se0 = (p0 * (1.0 - p0) / n0 as f64).sqrt();
    // Small enough that the tail event is common.
    let a = 3u32;
    let n = 4000u64;
    let m: Vec<u64> = (0..n).into_par_iter().map(|i| coupling::first_origin_set(r, StreamKey::new(52, i), &o, 100_000).unwrap().0).collect();
    let freq = m.iter().filter(|&&k| k > a as u64).count() as f64 / n as f64;
    let expected = (1.0 - p0).powi(a as i32);
    let se = (freq * (1.0 - freq) / n as f64 + (a as f64 * (1.0 - p0).powi(a as i32 - 1) * se0).powi(2)).sqrt();
    assert!((freq - expected).abs() < 3.0 * se, "P(m^E > {a}) = {freq} vs {expected} ± {se}");

    let a_thr = scales::a_threshold(r).unwrap();
    let tail = m.iter().filter(|&&k| k as f64 > a_thr).count() as f64 / n as f64;
    assert!(tail < 0.1);
}

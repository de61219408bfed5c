use covlab_core::brownian::{self, sausage_cover_run, SausageParams};
use covlab_core::rng::StreamKey;
use covlab_core::stats::mean_se;
use rayon::prelude::*;

#[test]
fn sausage_counts_are_scale_invariant() {
    let big = SausageParams::new(30.0);
    let outer = big.outer_radius().unwrap();
    let small = SausageParams {
        r: 15.0,
        outer: Some(outer / 2.0),
        sausage_radius: 0.5,
        dt: big.dt / 4.0,
        h: big.h / 2.0,
        ..big
    };
    let diffs: Vec<(f64, f64, f64)> = (0..24u64)
        .into_par_iter()
        .map(|i| {
            let a = sausage_cover_run(&big, StreamKey::new(61, i)).unwrap();
            let b = sausage_cover_run(&small, StreamKey::new(61, i)).unwrap();
            (a.excursion_count as f64 - b.excursion_count as f64, a.cover_time, b.cover_time)
        })
        .collect();
    let d: Vec<f64> = diffs.iter().map(|x| x.0).collect();
    let (m, se) = mean_se(&d);
    assert!(m.abs() <= 3.0 * se, "mean paired difference {m} ± {se}");
    // Time scales by c² along the shared noise.
    let same = diffs.iter().filter(|x| x.0 == 0.0 && (x.1 / 4.0 - x.2).abs() <= 1e-6 * x.2.abs().max(1.0) || (x.1.is_infinite() && x.2.is_infinite())).count();
    assert!(same >= 20, "{same}/24 runs match pathwise");
}

#[test]
fn exit_time_tail_matches_series_oracle() {
    // Exit of D(0, 30) from the center; reference values from the Bessel
    // series for the survival function.
    let s = brownian::brownian_exit_stats(30.0, 0.25, 0.01, 0, 4000, 71).unwrap();
    let below = 0.535926500236594240870668810125;
    let above = 0.00184348988175097408083556323157;
    let n = s.samples as f64;
    assert!((s.below - below).abs() < 3.0 * (below * (1.0 - below) / n).sqrt() + 0.01, "{s:?}");
    assert!((s.above - above).abs() < 3.0 * (above * (1.0 - above) / n).sqrt() + 0.002, "{s:?}");
    assert!((s.mean - 450.0).abs() < 3.0 * s.std_error + 0.01 * 450.0, "{s:?}");
}

//! The accelerated engine against plain stepping at the r = 30 geometry.

use covlab_core::rng::StreamKey;
use covlab_core::scales;
use covlab_core::srw::{self, CoverOptions, Engine, HittingOptions};
use covlab_core::stats::{mean_se, z_diff};
use rayon::prelude::*;

#[test]
fn hitting_probability_matches_direct_engine() {
    let n = 4000;
    let fast = HittingOptions { engine: Engine::Accelerated, ..Default::default() };
    let slow = HittingOptions { engine: Engine::Direct, ..Default::default() };
    let a = srw::hitting_prob_estimate(30.0, 60.0, 480.0, n, 101, &fast).unwrap();
    let b = srw::hitting_prob_estimate(30.0, 60.0, 480.0, n, 202, &slow).unwrap();
    let z = z_diff(a.estimate, a.std_error, b.estimate, b.std_error);
    assert!(z.abs() < 3.0, "{a:?} {b:?} z={z}");
}

fn excursion_ratios(seed: u64, runs: u64, opts: &CoverOptions) -> Vec<f64> {
    let phi = scales::phi(30.0).unwrap();
    (0..runs)
        .into_par_iter()
        .map(|i| srw::simulate_cover(30.0, StreamKey::new(seed, i), opts).unwrap().excursion_count as f64 / phi)
        .collect()
}

#[test]
fn excursion_count_matches_direct_engine() {
    let fast = CoverOptions::default();
    let slow = CoverOptions { engine: Engine::Direct, far_field_factor: Some(16.0), ..Default::default() };
    let (ma, sa) = mean_se(&excursion_ratios(303, 300, &fast));
    let (mb, sb) = mean_se(&excursion_ratios(404, 100, &slow));
    let z = z_diff(ma, sa, mb, sb);
    assert!(z.abs() < 3.0, "fast {ma}±{sa} direct {mb}±{sb} z={z}");
}

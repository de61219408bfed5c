use std::collections::BTreeMap;

use covlab_core::annulus::leading_term;
use covlab_core::brownian::sausage::wrapped_cauchy_cdf;
use covlab_core::brownian::torus::wrap;
use covlab_core::brownian::{annulus_hit_prob_formula, GaussianDriver};
use covlab_core::coupling::xi_tail_prob;
use covlab_core::harness::record::{f64_value, value_f64, SCHEMA};
use covlab_core::harness::{summarize, ExperimentConfig, ExperimentKind, RunRecord, SummaryRow};
use covlab_core::rng::{Lane, StreamKey};
use covlab_core::scales::{self, ScheduleParams, Side};
use covlab_core::srw::walker::{annulus_mean_exit, dyadic_return_time};
use proptest::prelude::*;
use rand::RngCore;

fn csv(rows: &[SummaryRow]) -> Vec<String> {
    rows.iter().map(SummaryRow::to_csv).collect()
}

proptest! {
    #[test]
    fn exponent_matches_exact_form(l in 0.01f64..2.0, a in 1.0f64..3.0, e1 in 0.0f64..0.33, e2 in 0.0f64..0.49) {
        let p = ScheduleParams::new(l, a, e1, e2).unwrap();
        let q = |x: f64| scales::rational(x).unwrap();
        for side in [Side::Upper, Side::Lower] {
            let f = scales::series_exponent(side, &p);
            let (e, conv) = scales::series_exponent_exact(side, &q(l), &q(a), &q(e1), &q(e2)).unwrap();
            let ef = scales::to_f64(&e);
            prop_assert!((f.exponent - ef).abs() <= 1e-12 * ef.abs().max(1.0));
            if (ef - 1.0).abs() > 1e-9 {
                prop_assert_eq!(f.converges, conv);
            }
        }
    }

    #[test]
    fn exponent_increases_in_lambda(l in 0.01f64..2.0, d in 1e-6f64..1.0) {
        let (a, b) = (ScheduleParams::new(l, 1.2, 0.0, 0.0).unwrap(), ScheduleParams::new(l + d, 1.2, 0.0, 0.0).unwrap());
        for side in [Side::Upper, Side::Lower] {
            prop_assert!(scales::series_exponent(side, &a).exponent < scales::series_exponent(side, &b).exponent);
        }
    }

    #[test]
    fn tilde_prob_is_a_probability(n in 30u32..5000, l in 0.05f64..0.6, a in 1.05f64..1.5) {
        let p = ScheduleParams::new(l, a, 0.0, 0.0).unwrap();
        for side in [Side::Upper, Side::Lower] {
            if let Ok(t) = scales::tilde_event_prob(n, &p, side) {
                prop_assert!(t.prob > 0.0 && t.prob <= 1.0);
                prop_assert!(t.bracket > 0.0 && t.bracket <= 1.0);
                let s = scales::tilde_sensitivity(n, &p, side).unwrap();
                prop_assert!(s.plus <= s.central && s.central <= s.minus);
            }
        }
    }

    #[test]
    fn phi_and_wp_increase(x in 16.0f64..1e12, d in 1.0f64..1e3) {
        prop_assert!(scales::phi(x).unwrap() < scales::phi(x + d).unwrap());
        prop_assert!(scales::wp(x).unwrap() < scales::wp(x + d).unwrap());
    }

    #[test]
    fn xi_tail_is_monotone(m in 2u64..400, a in 0.0f64..1.0, dm in 1u64..50, da in 0.0f64..0.2) {
        let p = xi_tail_prob(m, a);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(xi_tail_prob(m + dm, a) >= p - 1e-15);
        prop_assert!(xi_tail_prob(m, (a + da).min(1.0)) >= p - 1e-15);
    }

    #[test]
    fn annulus_formula_is_a_decreasing_probability(r1 in 0.1f64..10.0, f2 in 1.01f64..10.0, f3 in 1.01f64..10.0, g in 0.01f64..0.99) {
        let (r2, r3) = (r1 * f2, r1 * f2 * f3);
        let p = annulus_hit_prob_formula(r1, r2, r3).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
        let r2b = r2 + g * (r3 - r2);
        prop_assert!(annulus_hit_prob_formula(r1, r2b, r3).unwrap() < p);
        prop_assert!((leading_term(r1, r2, r3) - p).abs() < 1e-12);
    }

    #[test]
    fn torus_wrap_is_a_fundamental_domain(x in -1e6f64..1e6) {
        let w = wrap(x);
        prop_assert!(w > -0.5 && w <= 0.5);
        let k = x - w;
        prop_assert!((k - k.round()).abs() < 1e-6);
        prop_assert_eq!(wrap(w), w);
    }

    #[test]
    fn wrapped_cauchy_cdf_is_a_cdf(q in 0.0f64..0.99, t in -3.1f64..3.1, d in 0.0f64..0.04) {
        let c = wrapped_cauchy_cdf(t, q);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(wrapped_cauchy_cdf(t + d, q) >= c - 1e-15);
        prop_assert!((wrapped_cauchy_cdf(-t, q) - (1.0 - c)).abs() < 1e-12);
    }

    #[test]
    fn annulus_mean_exit_is_nonnegative(a in 0.5f64..100.0, fb in 1.01f64..10.0, u in 0.0f64..1.0) {
        let b = a * fb;
        let s = a + u * (b - a);
        prop_assert!(annulus_mean_exit(a, b, s) >= -1e-9 * b * b);
        prop_assert!(annulus_mean_exit(a, b, a).abs() <= 1e-9 * b * b);
        prop_assert!(annulus_mean_exit(a, b, b).abs() <= 1e-9 * b * b);
    }

    #[test]
    fn return_times_replay(seed in any::<u64>(), run in 0u64..1000, s in 10.0f64..1e4) {
        let key = StreamKey::new(seed, run);
        let a = dyadic_return_time(&mut key.rng(Lane::Return, 0), s, 8.0);
        let b = dyadic_return_time(&mut key.rng(Lane::Return, 0), s, 8.0);
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn streams_are_keyed_by_run_and_lane(seed in any::<u64>(), run in 0u64..(1 << 30)) {
        let key = StreamKey::new(seed, run);
        let x = key.rng(Lane::Walk, 0).next_u64();
        prop_assert_eq!(x, key.rng(Lane::Walk, 0).next_u64());
        prop_assert_ne!(x, StreamKey::new(seed, run + 1).rng(Lane::Walk, 0).next_u64());
        prop_assert_ne!(x, key.rng(Lane::Gauss, 0).next_u64());
    }

    #[test]
    fn refinement_sums_to_the_coarse_step(seed in any::<u64>(), level in 1u32..=4) {
        let key = StreamKey::new(seed, 0);
        let (mut coarse, mut fine) = (GaussianDriver::new(key, 0.01, 0), GaussianDriver::new(key, 0.01, level));
        let (mut c, mut f) = (Vec::new(), Vec::new());
        for _ in 0..16 {
            coarse.next_coarse(&mut c);
            fine.next_coarse(&mut f);
            prop_assert_eq!(f.len(), 1 << level);
            let (sx, sy) = f.iter().fold((0.0, 0.0), |s, d| (s.0 + d.0, s.1 + d.1));
            prop_assert!((sx - c[0].0).abs() < 1e-12 && (sy - c[0].1).abs() < 1e-12);
        }
    }

    #[test]
    fn json_values_round_trip(x in prop_oneof![any::<f64>(), Just(f64::INFINITY), Just(f64::NEG_INFINITY), Just(f64::NAN)]) {
        let v = f64_value(x);
        let back: serde_json::Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        let y = value_f64(&back).unwrap();
        prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
    }

    #[test]
    fn summaries_are_a_pure_fold(values in proptest::collection::vec((0u8..3, -1e6f64..1e6, any::<bool>()), 1..40)) {
        let recs: Vec<RunRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &(g, v, failed))| RunRecord {
                schema: SCHEMA.into(),
                experiment: ExperimentKind::ExitTime,
                params: BTreeMap::from([("r".to_string(), f64_value(g as f64))]),
                run: i as u64,
                seed: StreamKey::new(0, i as u64),
                outputs: BTreeMap::from([("zeta".to_string(), f64_value(v))]),
                diagnostics: BTreeMap::new(),
                error: failed.then(|| "budget".to_string()),
                wall_ms: i as f64,
            })
            .collect();
        let mut text = Vec::new();
        for r in &recs {
            covlab_core::harness::record::write_record(&mut text, r).unwrap();
        }
        let back = covlab_core::harness::read_records(std::io::Cursor::new(text)).unwrap();
        prop_assert_eq!(csv(&summarize(&recs)), csv(&summarize(&back)));
        let total: u64 = summarize(&recs).iter().filter(|r| r.metric == "zeta").map(|r| r.count).sum();
        prop_assert_eq!(total as usize, values.iter().filter(|v| !v.2).count());
    }

    #[test]
    fn config_keys_round_trip(seed in any::<u64>(), r in 8u32..500, n in 1u32..10_000) {
        let text = format!("experiment=srw-cover\nseed={seed}\nsrw.r={r}\nsrw.samples={n}\n");
        let c = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(c.seed, seed);
        prop_assert_eq!(c.get::<f64>("r").unwrap(), r as f64);
        prop_assert_eq!(c.get::<u64>("samples").unwrap(), n as u64);
        let foreign = format!("{text}hitting.r=3\n");
        prop_assert!(ExperimentConfig::parse(&foreign).is_err());
    }
}

//! The acceptance criteria as runnable checks.
//!
//! Stochastic criteria run through the harness, so criterion 12 can replay a
//! short prefix of each one at other worker counts and compare records.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::annulus::{self, SolverOptions};
use crate::brownian;
use crate::coupling;
use crate::error::{Error, Result};
use crate::harness::record::value_f64;
use crate::harness::{run_experiment, ExperimentConfig, ExperimentKind, RunRecord};
use crate::scales::{self, ScheduleParams, Side};
use crate::stats;

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "hitting-law accuracy"),
    (2, "exact-oracle agreement"),
    (3, "exit-time sandwich"),
    (4, "excursion-count law"),
    (5, "iid covering threshold"),
    (6, "coupling arithmetic and tails"),
    (7, "brownian annulus law"),
    (8, "brownian exit time"),
    (9, "torus eps-cover"),
    (10, "sausage excursions"),
    (11, "series threshold"),
    (12, "determinism"),
];

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Worker threads for the experiment runs; 0 uses all cores.
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 2024, workers: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} ({}): {} [{:.1}s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub struct Verifier {
    opts: VerifyOptions,
    runs: Vec<(ExperimentConfig, Vec<RunRecord>)>,
}

fn name_of(id: u32) -> &'static str {
    CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown", |(_, n)| n)
}

impl Verifier {
    pub fn new(opts: VerifyOptions) -> Self {
        Verifier { opts, runs: Vec::new() }
    }

    /// Runs criterion `id`; errors become a failing result.
    pub fn run(&mut self, id: u32) -> CriterionResult {
        let t0 = Instant::now();
        let out = match id {
            1 => self.c1(),
            2 => self.c2(),
            3 => self.c3(),
            4 => self.c4(),
            5 => self.c5(),
            6 => self.c6(),
            7 => self.c7(),
            8 => self.c8(),
            9 => self.c9(),
            10 => self.c10(),
            11 => c11(),
            12 => self.c12(),
            _ => Err(Error::invalid(format!("no criterion {id}"))),
        };
        let (pass, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
        CriterionResult { id, name: name_of(id), pass, detail, seconds: t0.elapsed().as_secs_f64() }
    }

    /// Runs every criterion in order, reporting each as it completes.
    pub fn run_all(&mut self, mut each: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
        CRITERIA
            .iter()
            .map(|&(id, _)| {
                let r = self.run(id);
                each(&r);
                r
            })
            .collect()
    }

    fn experiment(&mut self, cfg: ExperimentConfig) -> Result<Vec<RunRecord>> {
        let mut cfg = cfg;
        cfg.workers = self.opts.workers;
        let out = run_experiment(&cfg, None)?;
        self.runs.push((cfg, out.records.clone()));
        Ok(out.records)
    }

    fn c1(&mut self) -> Result<(bool, String)> {
        let recs = self.experiment(criterion_configs(1, self.opts.seed)?.remove(0))?;
        let (k, n) = successes(&recs)?;
        let p = k / n;
        Ok(((p - 0.5).abs() <= 0.03, format!("estimate {p:.4} over {n} walks (target 0.5 ± 0.03)")))
    }

    fn c2(&mut self) -> Result<(bool, String)> {
        let mut pass = true;
        let mut parts = Vec::new();
        for cfg in criterion_configs(2, self.opts.seed)? {
            let (rho, r, p): (f64, f64, f64) = (cfg.get("rho")?, cfg.get("r")?, cfg.get("P")?);
            let start = annulus::axis_boundary_point(r)?;
            let exact = annulus::exact_hit_prob(rho, r, p, start, &SolverOptions::default())?;
            let recs = self.experiment(cfg)?;
            let (k, n) = successes(&recs)?;
            let est = k / n;
            let sigma = (exact.value * (1.0 - exact.value) / n).sqrt();
            let ok = (est - exact.value).abs() <= 3.0 * sigma && exact.residual <= 1e-10;
            pass &= ok;
            parts.push(format!(
                "({rho},{r},{p}) from {start}: MC {est:.5} vs exact {:.5} ({:.1}σ), residual {:.1e}",
                exact.value,
                (est - exact.value) / sigma,
                exact.residual
            ));
        }
        Ok((pass, parts.join("; ")))
    }

    fn c3(&mut self) -> Result<(bool, String)> {
        let recs = self.experiment(criterion_configs(3, self.opts.seed)?.remove(0))?;
        let r = 50.0;
        let z = metric(&recs, "zeta")?;
        let (mean, se) = stats::mean_se(&z);
        let sandwich = mean + 3.0 * se > r * r && mean - 3.0 * se <= (r + 1.0) * (r + 1.0);
        let tail = stats::mean_se(&metric(&recs, "below")?).0 + stats::mean_se(&metric(&recs, "above")?).0;
        Ok((
            sandwich && tail < 0.01,
            format!(
                "mean ζ {mean:.1} ± {se:.1} in ({}, {}] {}; tail fraction {tail:.4} (needs < 0.01)",
                r * r,
                (r + 1.0) * (r + 1.0),
                if sandwich { "holds" } else { "fails" }
            ),
        ))
    }

    fn c4(&mut self) -> Result<(bool, String)> {
        let recs = self.experiment(criterion_configs(4, self.opts.seed)?.remove(0))?;
        let mut band = true;
        let mut dists = Vec::new();
        let mut parts = Vec::new();
        for r in [30.0, 60.0, 120.0] {
            let xs = metric(&select(&recs, "r", r), "N_over_phi")?;
            let med = stats::median(&xs);
            let mean = stats::mean_se(&xs).0;
            band &= med > 0.4 && med < 1.0;
            dists.push((mean - 2.0 / 3.0).abs());
            parts.push(format!("r={r}: median {med:.3}, mean {mean:.3}"));
        }
        let trend = dists.windows(2).all(|w| w[1] <= w[0]);
        Ok((
            band && trend,
            format!(
                "{}; median band (0.4, 1.0) {}, |mean − 2/3| non-increasing {}",
                parts.join(", "),
                verdict(band),
                verdict(trend)
            ),
        ))
    }

    fn c5(&mut self) -> Result<(bool, String)> {
        let recs = self.experiment(criterion_configs(5, self.opts.seed)?.remove(0))?;
        let phi = scales::phi(40.0)?;
        let (lo, hi) = ((0.33 * phi).floor(), (1.33 * phi).floor());
        let cov_lo = stats::mean_se(&metric(&select(&recs, "k", lo), "covered")?).0;
        let cov_hi = stats::mean_se(&metric(&select(&recs, "k", hi), "covered")?).0;
        Ok((
            cov_lo < 0.2 && 1.0 - cov_hi < 0.2,
            format!("coverage at k={lo} is {cov_lo:.3} (needs < 0.2); non-coverage at k={hi} is {:.3} (needs < 0.2)", 1.0 - cov_hi),
        ))
    }

    fn c6(&mut self) -> Result<(bool, String)> {
        let worst = xi_pairs().iter().map(|&(m, a)| (coupling::xi_tail_prob(m, a) - xi_tail_brute(m, a)).abs()).fold(0.0, f64::max);
        let recs = self.experiment(criterion_configs(6, self.opts.seed)?.remove(0))?;
        let xs = metric(&recs, "xi_exceeds_one")?;
        let exact = recs
            .first()
            .and_then(|r| r.diagnostics.get("xi_tail_exact"))
            .and_then(value_f64)
            .ok_or_else(|| Error::domain("coupling records lack xi_tail_exact"))?;
        let n = xs.len() as f64;
        let freq = stats::mean_se(&xs).0;
        let sigma = (exact * (1.0 - exact) / n).sqrt();
        let p_me = stats::mean_se(&metric(&recs, "m_e_exceeds_a")?).0;
        let (a_ok, f_ok, m_ok) = (worst <= 1e-12, (freq - exact).abs() <= 3.0 * sigma, p_me < 0.1);
        Ok((
            a_ok && f_ok && m_ok,
            format!(
                "max |xi_tail_prob − brute force| {worst:.1e} over {} pairs; P(Σξ > 1) {freq:.3} vs exact {exact:.4} ({:.1}σ); P(m^E > a) {p_me:.3} (needs < 0.1)",
                xi_pairs().len(),
                (freq - exact) / sigma
            ),
        ))
    }

    fn c7(&mut self) -> Result<(bool, String)> {
        let e = std::f64::consts::E;
        let s = brownian::annulus_side_frequency(1.0, e, e * e, 10_000, self.opts.seed.wrapping_mul(1000) + 7, C7_TOL)?;
        Ok((
            (s.inner_fraction - 0.5).abs() <= 0.02,
            format!("inner-hit frequency {:.4} ± {:.4} over {} samples (target 0.5 ± 0.02)", s.inner_fraction, s.std_error, s.samples),
        ))
    }

    fn c8(&mut self) -> Result<(bool, String)> {
        let mut cfgs = criterion_configs(8, self.opts.seed)?;
        let fine = self.experiment(cfgs.remove(1))?;
        let coarse = self.experiment(cfgs.remove(0))?;
        let (m0, se0) = stats::mean_se(&metric(&coarse, "zeta")?);
        let (m1, _) = stats::mean_se(&metric(&fine, "zeta")?);
        let shift = (m1 - m0).abs() / m0;
        let (a, b) = ((m0 - 50.0).abs() <= 3.0 * se0, shift < 0.01);
        Ok((
            a && b,
            format!("mean exit time {m0:.3} ± {se0:.3} vs 50 ({:.1}σ); halving dt gives {m1:.3}, shift {:.3}% (needs < 1%)", (m0 - 50.0) / se0, 100.0 * shift),
        ))
    }

    fn c9(&mut self) -> Result<(bool, String)> {
        let recs = self.experiment(criterion_configs(9, self.opts.seed)?.remove(0))?;
        let mean = |eps: f64| -> Result<f64> { Ok(stats::mean_se(&metric(&select(&recs, "eps", eps), "ratio")?).0) };
        let (m05, m02, m01) = (mean(0.05)?, mean(0.02)?, mean(0.01)?);
        let target = 2.0 / std::f64::consts::PI;
        let band = m02 > 0.3 && m02 < 1.1;
        let closer = (m01 - target).abs() < (m05 - target).abs();
        Ok((
            band && closer,
            format!("mean 𝓒_ε/(log ε)²: {m05:.3} (ε=0.05), {m02:.3} (ε=0.02, band (0.3, 1.1) {}), {m01:.3} (ε=0.01, closer to 2/π than ε=0.05 {})", verdict(band), verdict(closer)),
        ))
    }

    fn c10(&mut self) -> Result<(bool, String)> {
        let recs = self.experiment(criterion_configs(10, self.opts.seed)?.remove(0))?;
        let xs = metric(&recs, "N_over_phi")?;
        let med = stats::median(&xs);
        Ok((med > 0.4 && med < 1.0, format!("median N_r/φ_r {med:.3} over {} runs (band (0.4, 1.0)), mean {:.3}", xs.len(), stats::mean_se(&xs).0)))
    }

    fn c12(&mut self) -> Result<(bool, String)> {
        let mut checked = 0;
        let mut bad = Vec::new();
        for id in [1, 2, 3, 4, 5, 6, 8, 9, 10] {
            for cfg in criterion_configs(id, self.opts.seed)? {
                let small = reduced(&cfg)?;
                let mut a_cfg = small.clone();
                a_cfg.workers = 1;
                let mut b_cfg = small.clone();
                b_cfg.workers = 3;
                let a = strip(&run_experiment(&a_cfg, None)?.records);
                let b = strip(&run_experiment(&b_cfg, None)?.records);
                let mut same = a == b;
                if let Some((_, full)) = self.runs.iter().find(|(c, _)| c.experiment == cfg.experiment && c.params == cfg.params && c.seed == cfg.seed) {
                    same &= full.len() >= a.len() && strip(&full[..a.len()]) == a;
                }
                checked += a.len();
                if !same {
                    bad.push(format!("criterion {id} ({})", cfg.experiment));
                }
            }
        }
        let e = std::f64::consts::E;
        let side = |threads: usize| -> Result<brownian::SideEstimate> {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::config(e.to_string()))?;
            pool.install(|| brownian::annulus_side_frequency(1.0, e, e * e, 500, self.opts.seed.wrapping_mul(1000) + 7, C7_TOL))
        };
        if side(1)? != side(3)? {
            bad.push("criterion 7".into());
        }
        Ok((
            bad.is_empty(),
            if bad.is_empty() {
                format!("{checked} replayed records identical at 1 and 3 workers and to the original runs; walk-on-spheres estimate identical")
            } else {
                format!("mismatch in {}", bad.join(", "))
            },
        ))
    }
}

const C7_TOL: f64 = 1e-6;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "fails"
    }
}

fn strip(recs: &[RunRecord]) -> Vec<RunRecord> {
    recs.iter().map(RunRecord::without_wall_time).collect()
}

/// The experiment configs behind a stochastic criterion.
pub fn criterion_configs(id: u32, seed: u64) -> Result<Vec<ExperimentConfig>> {
    let texts: &[&str] = match id {
        1 => &["experiment=hitting\nhitting.rho=8\nhitting.r=40\nhitting.P=200\nhitting.samples=10000"],
        2 => &[
            "experiment=hitting\nhitting.rho=1\nhitting.r=2\nhitting.P=4\nhitting.samples=100000\nhitting.batch=10000",
            "experiment=hitting\nhitting.rho=2\nhitting.r=5\nhitting.P=20\nhitting.samples=100000\nhitting.batch=10000",
        ],
        3 => &["experiment=exit-time\nexit.process=srw\nexit.r=50\nexit.samples=2000\nexit.eps=0.25"],
        4 => &["experiment=srw-cover\nsrw.r=30,60,120\nsrw.samples=200"],
        5 => &["experiment=iid-cover\niid.r=40\niid.k_factor=0.33,1.33\niid.samples=200\niid.kind=c"],
        6 => &["experiment=coupling\ncoupling.r=30\ncoupling.samples=500"],
        8 => &[
            "experiment=exit-time\nexit.process=brownian\nexit.r=10\nexit.dt=0.001\nexit.level=0\nexit.samples=2000",
            "experiment=exit-time\nexit.process=brownian\nexit.r=10\nexit.dt=0.001\nexit.level=1\nexit.samples=2000",
        ],
        9 => &["experiment=torus-cover\ntorus.eps=0.05,0.02,0.01\ntorus.samples=50"],
        10 => &["experiment=sausage-cover\nsausage.r=30\nsausage.R=0.1\nsausage.samples=100"],
        _ => &[],
    };
    texts
        .iter()
        .map(|t| {
            let mut c = ExperimentConfig::parse(t)?;
            c.seed = seed.wrapping_mul(1000).wrapping_add(id as u64);
            Ok(c)
        })
        .collect()
}

/// The same config cut to its first group and a few runs, so its records
/// are a prefix of the full run's.
pub fn reduced(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    for key in ["r", "eps", "k", "k_factor"] {
        if let Some(v) = c.params.get_mut(key) {
            *v = v.split(',').next().unwrap_or("").trim().to_string();
        }
    }
    let n = match cfg.experiment {
        ExperimentKind::Hitting => cfg.get::<u64>("batch")?.to_string(),
        ExperimentKind::SausageCover => "2".into(),
        _ => "4".into(),
    };
    c.params.insert("samples".into(), n);
    Ok(c)
}

fn select(recs: &[RunRecord], key: &str, value: f64) -> Vec<RunRecord> {
    recs.iter().filter(|r| r.params.get(key).and_then(value_f64) == Some(value)).cloned().collect()
}

/// One metric over all runs; any failed run fails the criterion.
fn metric(recs: &[RunRecord], key: &str) -> Result<Vec<f64>> {
    if recs.is_empty() {
        return Err(Error::domain(format!("no runs for {key}")));
    }
    if let Some(bad) = recs.iter().find(|r| r.error.is_some()) {
        let n = recs.iter().filter(|r| r.error.is_some()).count();
        return Err(Error::domain(format!("{n} of {} runs failed, first: {}", recs.len(), bad.error.as_deref().unwrap_or(""))));
    }
    recs.iter().map(|r| r.output_f64(key).ok_or_else(|| Error::domain(format!("run {} lacks {key}", r.run)))).collect()
}

fn successes(recs: &[RunRecord]) -> Result<(f64, f64)> {
    let k: f64 = metric(recs, "successes")?.iter().sum();
    let n: f64 = metric(recs, "samples")?.iter().sum();
    Ok((k, n))
}

/// `(m, α)` pairs spanning small and large `mα`.
pub fn xi_pairs() -> Vec<(u64, f64)> {
    (0..50u64)
        .map(|i| {
            let m = 2 + (i * 37) % 149;
            let alpha = match i % 5 {
                0 => 1e-4 * (i + 1) as f64,
                1 => 0.01 + 0.003 * i as f64,
                2 => 0.5 / (m as f64),
                3 => 0.9 - 0.01 * i as f64,
                _ => 0.143_547_f64 + 0.001 * i as f64,
            };
            (m, alpha)
        })
        .collect()
}

/// `P(Binomial(m, α) > 1)` by exact summation of the pmf over `2..=m`.
pub fn xi_tail_brute(m: u64, alpha: f64) -> f64 {
    let a = BigRational::from_float(alpha).expect("finite α");
    let q = BigRational::one() - &a;
    let mut sum = BigRational::zero();
    let mut binom = BigInt::one();
    for j in 0..=m {
        if j >= 2 {
            let term = BigRational::from_integer(binom.clone()) * pow(&a, j) * pow(&q, m - j);
            sum += term;
        }
        binom = binom * BigInt::from(m - j) / BigInt::from(j + 1);
    }
    scales::to_f64(&sum)
}

fn pow(x: &BigRational, k: u64) -> BigRational {
    num_traits::pow(x.clone(), k as usize)
}

fn c11() -> Result<(bool, String)> {
    let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let one = BigRational::one();
    let zero = BigRational::zero();
    let mut flip = true;
    for side in [Side::Upper, Side::Lower] {
        let (e, c) = scales::series_exponent_exact(side, &q(1, 4), &one, &zero, &zero)?;
        flip &= e == one && !c;
        for k in 1..=12u32 {
            let d = BigRational::new(1.into(), num_traits::pow(BigInt::from(10), k as usize));
            flip &= scales::series_exponent_exact(side, &(q(1, 4) + &d), &one, &zero, &zero)?.1;
            flip &= !scales::series_exponent_exact(side, &(q(1, 4) - &d), &one, &zero, &zero)?.1;
        }
    }
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for alpha in [1.1, 1.01] {
        for lambda in [0.2, 0.25, 0.3] {
            let p = ScheduleParams::new(lambda, alpha, 0.0, 0.0)?;
            for side in [Side::Upper, Side::Lower] {
                let n = scales::error_terms_settle(&p, side, 0.01, 1_000_000)
                    .ok_or_else(|| Error::domain(format!("error terms never fall below 0.01 at λ={lambda}, α={alpha}")))?;
                for m in [n, 2 * n, 4 * n] {
                    worst = worst.max((scales::tilde_event_prob(m, &p, side)?.ratio - 1.0).abs());
                    cases += 1;
                }
            }
        }
    }
    Ok((
        flip && worst < 0.05,
        format!(
            "exact exponent is 1 at λ=1/4 with the classification flipping across it {}; max |ratio − 1| {worst:.2e} over {cases} settled cases (needs < 0.05)",
            verdict(flip)
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_tail_matches_exact_summation() {
        for (m, a) in xi_pairs() {
            assert!((coupling::xi_tail_prob(m, a) - xi_tail_brute(m, a)).abs() <= 1e-12, "m={m} α={a}");
        }
        assert_eq!(xi_tail_brute(1, 0.3), 0.0);
        assert!((xi_tail_brute(2, 0.5) - 0.25).abs() < 1e-15);
        assert!((xi_tail_brute(3, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn series_criterion_passes() {
        let (pass, detail) = c11().unwrap();
        assert!(pass, "{detail}");
    }

    #[test]
    fn reduced_configs_keep_the_first_group() {
        let c = reduced(&criterion_configs(9, 1).unwrap()[0]).unwrap();
        assert_eq!(c.params["eps"], "0.05");
        assert_eq!(c.params["samples"], "4");
        let h = reduced(&criterion_configs(2, 1).unwrap()[1]).unwrap();
        assert_eq!(h.params["samples"], "10000");
        for id in 1..=12 {
            for cfg in criterion_configs(id, 3).unwrap() {
                crate::harness::Plan::new(&cfg).unwrap();
                crate::harness::Plan::new(&reduced(&cfg).unwrap()).unwrap();
            }
        }
    }

    #[test]
    fn replayed_prefix_matches() {
        let mut cfg = ExperimentConfig::parse("experiment=srw-cover\nsrw.r=8,12\nsrw.samples=6").unwrap();
        cfg.workers = 2;
        let full = run_experiment(&cfg, None).unwrap().records;
        let mut small = reduced(&cfg).unwrap();
        small.workers = 1;
        let part = run_experiment(&small, None).unwrap().records;
        assert_eq!(part.len(), 4);
        assert_eq!(strip(&full[..4]), strip(&part));
    }

    #[test]
    fn unknown_criterion_fails_cleanly() {
        let r = Verifier::new(VerifyOptions::default()).run(13);
        assert!(!r.pass && r.detail.contains("no criterion"));
        assert!(r.line().starts_with("FAIL criterion 13"));
    }
}

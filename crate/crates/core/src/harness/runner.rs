//! Expands a config into runs, executes them in parallel and streams records
//! in run order.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind};
use super::record::{f64_value, summarize, write_record, RunRecord, SummaryRow, SCHEMA};
use crate::brownian::{self, SausageParams};
use crate::coupling::{self, CouplingOptions, SetKind, SetOptions};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scales::{self, ScheduleParams, Side};
use crate::srw::{self, CoverOptions, Engine, HittingOptions, StartMode};

#[derive(Clone, Debug)]
enum Task {
    SrwCover { r: f64, opts: CoverOptions },
    Sausage(SausageParams),
    Hitting { rho: f64, r: f64, p: f64, batch: u64, total: u64, opts: HittingOptions },
    ExitSrw { r: f64, eps: f64, engine: Engine, budget: u64 },
    ExitBrownian { r: f64, eps: f64, dt: f64, level: u32 },
    Iid { r: f64, k: u64, kind: SetKind, opts: SetOptions },
    Coupling { r: f64, opts: CouplingOptions },
    Torus { eps: f64, dt: f64, budget: u64 },
    Series { p: ScheduleParams, side: Side, ns: Vec<u32> },
}

#[derive(Clone, Debug)]
struct Group {
    params: BTreeMap<String, Value>,
    runs: u64,
    task: Task,
}

/// A validated config, expanded into groups of runs.
#[derive(Clone, Debug)]
pub struct Plan {
    kind: ExperimentKind,
    seed: u64,
    workers: usize,
    groups: Vec<Group>,
}

fn bad(msg: String) -> Error {
    Error::config(msg)
}

fn positive(name: &str, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(bad(format!("{name} must be positive")));
    }
    Ok(n)
}

impl Plan {
    /// Checks every parameter against the owning module's preconditions.
    pub fn new(cfg: &ExperimentConfig) -> Result<Plan> {
        let mut groups = Vec::new();
        let budget = cfg.budget_steps;
        match cfg.experiment {
            ExperimentKind::SrwCover => {
                let samples = positive("srw.samples", cfg.get("samples")?)?;
                let engine: Engine = cfg.get::<String>("engine")?.parse()?;
                let far = cfg.get_opt::<f64>("far_field")?;
                let ratio = cfg.get_opt::<f64>("checkpoint_ratio")?;
                if far.is_some_and(|f| !(f >= 2.0)) || ratio.is_some_and(|g| !(g > 1.0)) {
                    return Err(bad("srw.far_field must be ≥ 2 and srw.checkpoint_ratio > 1".into()));
                }
                for r in cfg.get_list::<f64>("r")? {
                    if !(r >= 8.0) {
                        return Err(bad(format!("srw-cover needs r ≥ 8, got {r}")));
                    }
                    let mut opts = CoverOptions { engine, far_field_factor: far, checkpoint_ratio: ratio, ..Default::default() };
                    if let Some(b) = budget {
                        opts.budget = b;
                    }
                    groups.push(Group { params: BTreeMap::from([("r".into(), f64_value(r))]), runs: samples, task: Task::SrwCover { r, opts } });
                }
            }
            ExperimentKind::SausageCover => {
                let samples = positive("sausage.samples", cfg.get("samples")?)?;
                for r in cfg.get_list::<f64>("r")? {
                    let mut p = SausageParams {
                        big_r: cfg.get("R")?,
                        outer: cfg.get_opt("outer")?,
                        sausage_radius: cfg.get("radius")?,
                        dt: cfg.get("dt")?,
                        level: cfg.get("level")?,
                        h: cfg.get("h")?,
                        ..SausageParams::new(r)
                    };
                    if let Some(b) = budget {
                        p.budget = b;
                    }
                    p.validate().map_err(|e| bad(e.to_string()))?;
                    groups.push(Group { params: BTreeMap::from([("r".into(), f64_value(r))]), runs: samples, task: Task::Sausage(p) });
                }
            }
            ExperimentKind::Hitting => {
                let (rho, r, p): (f64, f64, f64) = (cfg.get("rho")?, cfg.get("r")?, cfg.get("P")?);
                if !(0.0 <= rho && rho < r && r < p) {
                    return Err(bad(format!("hitting needs ρ < r < P, got ({rho}, {r}, {p})")));
                }
                let total = positive("hitting.samples", cfg.get("samples")?)?;
                let batch = positive("hitting.batch", cfg.get("batch")?)?;
                let start = match cfg.get::<String>("start")?.as_str() {
                    "fixed" => StartMode::Fixed,
                    "symmetrized" => StartMode::Symmetrized,
                    s => return Err(bad(format!("hitting.start must be fixed or symmetrized, got {s}"))),
                };
                let mut opts = HittingOptions { engine: cfg.get::<String>("engine")?.parse()?, start, ..Default::default() };
                if let Some(b) = budget {
                    opts.budget = b;
                }
                let params = BTreeMap::from([("rho".into(), f64_value(rho)), ("r".into(), f64_value(r)), ("P".into(), f64_value(p))]);
                groups.push(Group { params, runs: total.div_ceil(batch), task: Task::Hitting { rho, r, p, batch, total, opts } });
            }
            ExperimentKind::ExitTime => {
                let samples = positive("exit.samples", cfg.get("samples")?)?;
                let eps: f64 = cfg.get("eps")?;
                if !(eps > 0.0 && eps < 2.0) {
                    return Err(bad(format!("exit.eps must lie in (0, 2), got {eps}")));
                }
                let process: String = cfg.get("process")?;
                for r in cfg.get_list::<f64>("r")? {
                    let task = match process.as_str() {
                        "srw" => {
                            if !(r >= 1.0) {
                                return Err(bad(format!("exit-time needs r ≥ 1, got {r}")));
                            }
                            Task::ExitSrw { r, eps, engine: cfg.get::<String>("engine")?.parse()?, budget: budget.unwrap_or(srw::DEFAULT_BUDGET) }
                        }
                        "brownian" => {
                            let (dt, level): (f64, u32) = (cfg.get("dt")?, cfg.get("level")?);
                            if !(r >= 1.0 && dt > 0.0 && level <= brownian::driver::MAX_LEVEL) {
                                return Err(bad(format!("brownian exit-time needs r ≥ 1, dt > 0 and level ≤ {}", brownian::driver::MAX_LEVEL)));
                            }
                            Task::ExitBrownian { r, eps, dt, level }
                        }
                        s => return Err(bad(format!("exit.process must be srw or brownian, got {s}"))),
                    };
                    let params = BTreeMap::from([("process".into(), Value::String(process.clone())), ("r".into(), f64_value(r))]);
                    groups.push(Group { params, runs: samples, task });
                }
            }
            ExperimentKind::IidCover => {
                let r: f64 = cfg.get("r")?;
                if !(r >= 8.0) {
                    return Err(bad(format!("iid-cover needs r ≥ 8, got {r}")));
                }
                let samples = positive("iid.samples", cfg.get("samples")?)?;
                let kind: SetKind = cfg.get::<String>("kind")?.parse()?;
                let ks: Vec<u64> = if cfg.has("k") {
                    cfg.get_list("k")?
                } else {
                    let phi = scales::phi(r)?;
                    cfg.get_list::<f64>("k_factor")?.into_iter().map(|f| (f * phi).floor().max(0.0) as u64).collect()
                };
                let mut opts = SetOptions::default();
                if let Some(b) = budget {
                    opts.budget = b;
                }
                for k in ks {
                    let params = BTreeMap::from([
                        ("r".into(), f64_value(r)),
                        ("k".into(), json!(k)),
                        ("kind".into(), Value::String(cfg.get::<String>("kind")?.to_ascii_lowercase())),
                    ]);
                    groups.push(Group { params, runs: samples, task: Task::Iid { r, k, kind, opts } });
                }
            }
            ExperimentKind::Coupling => {
                let r: f64 = cfg.get("r")?;
                if !(r >= 16.0) {
                    return Err(bad(format!("coupling needs r ≥ 16, got {r}")));
                }
                let samples = positive("coupling.samples", cfg.get("samples")?)?;
                let c1: Option<f64> = cfg.get_opt("c1")?;
                if c1.is_some_and(|c| !(c >= 0.0 && c <= r.ln().powi(2))) {
                    return Err(bad("coupling.c1 must lie in [0, (log r)²]".into()));
                }
                let u: f64 = cfg.get("u")?;
                if !(u > 0.0) {
                    return Err(bad("coupling.u must be positive".into()));
                }
                let mut opts = CouplingOptions { c1, u, max_sets: positive("coupling.max_sets", cfg.get("max_sets")?)?, ..Default::default() };
                if let Some(b) = budget {
                    opts.sets.budget = b;
                }
                groups.push(Group { params: BTreeMap::from([("r".into(), f64_value(r))]), runs: samples, task: Task::Coupling { r, opts } });
            }
            ExperimentKind::TorusCover => {
                let samples = positive("torus.samples", cfg.get("samples")?)?;
                let dt_opt: Option<f64> = cfg.get_opt("dt")?;
                for eps in cfg.get_list::<f64>("eps")? {
                    if !(eps > 0.0 && eps <= 0.05) {
                        return Err(bad(format!("torus.eps must lie in (0, 0.05], got {eps}")));
                    }
                    let dt = dt_opt.unwrap_or(eps * eps / 25.0);
                    if !(dt > 0.0 && dt <= eps * eps / 25.0) {
                        return Err(bad(format!("torus.dt must lie in (0, ε²/25], got {dt}")));
                    }
                    let task = Task::Torus { eps, dt, budget: budget.unwrap_or(brownian::DEFAULT_TORUS_BUDGET) };
                    groups.push(Group { params: BTreeMap::from([("eps".into(), f64_value(eps))]), runs: samples, task });
                }
            }
            ExperimentKind::SeriesScan => {
                let ns: Vec<u32> = cfg.get_list("n")?;
                if ns.contains(&0) {
                    return Err(bad("series.n entries must be positive".into()));
                }
                for lambda in cfg.get_list::<f64>("lambda")? {
                    let p = ScheduleParams::new(lambda, cfg.get("alpha")?, cfg.get("eps1")?, cfg.get("eps2")?)
                        .map_err(|e| bad(e.to_string()))?;
                    for side in [Side::Upper, Side::Lower] {
                        let params = BTreeMap::from([("lambda".into(), f64_value(lambda)), ("side".into(), json!(side))]);
                        groups.push(Group { params, runs: ns.len() as u64, task: Task::Series { p, side, ns: ns.clone() } });
                    }
                }
            }
            ExperimentKind::LilStatistic => {
                return Err(bad("lil-statistic is a report over stored records; use `report lil`".into()));
            }
        }
        Ok(Plan { kind: cfg.experiment, seed: cfg.seed, workers: cfg.workers, groups })
    }

    pub fn total_runs(&self) -> u64 {
        self.groups.iter().map(|g| g.runs).sum()
    }

    fn jobs(&self) -> Vec<(usize, u64, u64)> {
        let mut out = Vec::new();
        let mut global = 0;
        for (gi, g) in self.groups.iter().enumerate() {
            for local in 0..g.runs {
                out.push((gi, local, global));
                global += 1;
            }
        }
        out
    }

    fn execute(&self, gi: usize, local: u64, global: u64) -> RunRecord {
        let g = &self.groups[gi];
        let key = StreamKey::new(self.seed, global);
        let t0 = Instant::now();
        let mut outputs = BTreeMap::new();
        let mut diagnostics = BTreeMap::new();
        let res = run_task(&g.task, local, key, self.seed, &mut outputs, &mut diagnostics);
        RunRecord {
            schema: SCHEMA.into(),
            experiment: self.kind,
            params: g.params.clone(),
            run: global,
            seed: key,
            outputs,
            diagnostics,
            error: res.err().map(|e| e.to_string()),
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        }
    }
}

fn put(m: &mut BTreeMap<String, Value>, k: &str, v: f64) {
    m.insert(k.to_string(), f64_value(v));
}

fn run_task(
    task: &Task,
    local: u64,
    key: StreamKey,
    seed: u64,
    out: &mut BTreeMap<String, Value>,
    diag: &mut BTreeMap<String, Value>,
) -> Result<()> {
    match task {
        Task::SrwCover { r, opts } => {
            let res = srw::simulate_cover(*r, key, opts)?;
            put(out, "T_r", res.cover_time);
            put(out, "N_r", res.excursion_count as f64);
            put(out, "N_over_phi", res.excursion_count as f64 / scales::phi(*r)?);
            diag.insert("moves".into(), json!(res.wall_steps));
            diag.insert("time_exact".into(), json!(res.time_exact));
            diag.insert("checkpoints".into(), checkpoints(&res.checkpoints));
        }
        Task::Sausage(p) => {
            let res = brownian::sausage_cover_run(p, key)?;
            put(out, "T_r", res.cover_time);
            put(out, "N_r", res.excursion_count as f64);
            put(out, "N_over_phi", res.excursion_count as f64 / scales::phi(p.r)?);
            diag.insert("moves".into(), json!(res.moves));
            diag.insert("fine_samples".into(), json!(res.fine_samples));
            diag.insert("time_exact".into(), json!(res.time_exact));
            diag.insert("checkpoints".into(), checkpoints(&res.checkpoints));
        }
        Task::Hitting { rho, r, p, batch, total, opts } => {
            let lo = local * batch;
            let hi = (lo + batch).min(*total);
            let est = srw::hitting_prob_range(*rho, *r, *p, lo..hi, seed, opts)?;
            put(out, "estimate", est.estimate);
            put(out, "successes", est.successes as f64);
            put(out, "samples", est.samples as f64);
            put(diag, "leading_term", crate::annulus::leading_term(rho.max(f64::MIN_POSITIVE), *r, *p));
            diag.insert("walks".into(), json!([lo, hi]));
        }
        Task::ExitSrw { r, eps, engine, budget } => {
            let mut w = srw::walker_for(key, 0, crate::lattice::LatticePoint::ORIGIN, *engine, *budget);
            let (hit, zeta) = srw::run_until_hit(&mut w, *r)?;
            exit_outputs(out, *r, *eps, zeta as f64);
            put(out, "martingale", hit.norm2() as f64 - zeta as f64);
        }
        Task::ExitBrownian { r, eps, dt, level } => {
            let t = brownian::exit_time(*r, *dt, *level, key)?;
            exit_outputs(out, *r, *eps, t);
        }
        Task::Iid { r, k, kind, opts } => {
            let u = coupling::run_union_process(*r, *k, *kind, key, opts)?;
            put(out, "covered", u.covered as u8 as f64);
            put(out, "uncovered", u.uncovered as f64);
        }
        Task::Coupling { r, opts } => {
            let t = coupling::coupled_cover_run(*r, key, opts)?;
            let m = (opts.u * scales::phi(*r)?).ceil() as usize;
            put(out, "m_e", t.m_e as f64);
            out.insert("m_f".into(), t.m_f.map_or(Value::Null, |m| json!(m)));
            put(out, "m_e_exceeds_a", t.m_e_exceeds_a() as u8 as f64);
            put(out, "xi_exceeds_one", t.xi_exceeds_one(m) as u8 as f64);
            put(out, "xi_sum", t.xi_draws.iter().take(m).filter(|x| **x).count() as f64);
            put(out, "cover_index", t.cover_index as f64);
            put(diag, "alpha", t.alpha);
            put(diag, "c1", t.c1);
            put(diag, "a_threshold", t.a_threshold);
            put(diag, "xi_tail_exact", coupling::xi_tail_prob(m as u64, t.alpha));
            diag.insert("a0_in_e".into(), json!(t.a0_in_e));
            diag.insert("discrepancy_indices".into(), json!(t.discrepancy_indices));
        }
        Task::Torus { eps, dt, budget } => {
            let c = brownian::torus_cover_multi(&[*eps], *dt, eps / 4.0, key, *budget)?;
            let t = c.cover_times[0];
            put(out, "cover_time", t);
            put(out, "ratio", t / eps.ln().powi(2));
            diag.insert("steps".into(), json!(c.steps));
            diag.insert("targets".into(), json!(c.targets));
            put(diag, "dt", *dt);
        }
        Task::Series { p, side, ns } => {
            let n = ns[local as usize];
            let e = scales::series_exponent(*side, p);
            put(out, "n", n as f64);
            put(out, "exponent", e.exponent);
            put(out, "converges", e.converges as u8 as f64);
            let q = |x: f64| scales::rational(x);
            let (ex, conv) = scales::series_exponent_exact(*side, &q(p.lambda)?, &q(p.alpha)?, &q(p.eps1)?, &q(p.eps2)?)?;
            diag.insert("exponent_exact".into(), Value::String(ex.to_string()));
            diag.insert("converges_exact".into(), json!(conv));
            match scales::tilde_event_prob(n, p, *side) {
                Ok(t) => {
                    put(out, "prob", t.prob);
                    put(out, "asymptotic", t.asymptotic);
                    put(out, "ratio", t.ratio);
                    put(out, "max_error_term", t.max_error_term());
                }
                Err(e) => {
                    diag.insert("tilde_event".into(), Value::String(e.to_string()));
                }
            }
        }
    }
    Ok(())
}

fn exit_outputs(out: &mut BTreeMap<String, Value>, r: f64, eps: f64, t: f64) {
    put(out, "zeta", t);
    put(out, "below", (t <= r.powf(2.0 - eps)) as u8 as f64);
    put(out, "above", (t >= r.powf(2.0 + eps)) as u8 as f64);
}

fn checkpoints(cps: &[(f64, f64)]) -> Value {
    Value::Array(cps.iter().map(|&(t, rho)| Value::Array(vec![f64_value(t), f64_value(rho)])).collect())
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Records are written to `sink` in run order as chunks complete.
pub fn run_plan(plan: &Plan, mut sink: Option<&mut dyn Write>) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let jobs = plan.jobs();
    let chunk = 8 * pool.current_num_threads().max(1);
    let mut records = Vec::with_capacity(jobs.len());
    for part in jobs.chunks(chunk) {
        let recs: Vec<RunRecord> = pool.install(|| part.par_iter().map(|&(g, l, n)| plan.execute(g, l, n)).collect());
        if let Some(w) = sink.as_deref_mut() {
            for r in &recs {
                write_record(w, r)?;
            }
            w.flush()?;
        }
        records.extend(recs);
    }
    let summary = summarize(&records);
    Ok(RunOutput { records, summary })
}

pub fn run_experiment(cfg: &ExperimentConfig, sink: Option<&mut dyn Write>) -> Result<RunOutput> {
    let plan = Plan::new(cfg)?;
    run_plan(&plan, sink)
}

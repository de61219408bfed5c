//! Flat `key=value` experiment configs with dotted keys.
//!
//! ```text
//! experiment=srw-cover
//! seed=42
//! srw.r=30,60,120
//! srw.samples=200
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SrwCover,
    SausageCover,
    Hitting,
    ExitTime,
    IidCover,
    Coupling,
    TorusCover,
    SeriesScan,
    LilStatistic,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::SrwCover,
        ExperimentKind::SausageCover,
        ExperimentKind::Hitting,
        ExperimentKind::ExitTime,
        ExperimentKind::IidCover,
        ExperimentKind::Coupling,
        ExperimentKind::TorusCover,
        ExperimentKind::SeriesScan,
        ExperimentKind::LilStatistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SrwCover => "srw-cover",
            ExperimentKind::SausageCover => "sausage-cover",
            ExperimentKind::Hitting => "hitting",
            ExperimentKind::ExitTime => "exit-time",
            ExperimentKind::IidCover => "iid-cover",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::TorusCover => "torus-cover",
            ExperimentKind::SeriesScan => "series-scan",
            ExperimentKind::LilStatistic => "lil-statistic",
        }
    }

    /// Prefix of this kind's parameter keys.
    pub fn prefix(self) -> &'static str {
        match self {
            ExperimentKind::SrwCover => "srw",
            ExperimentKind::SausageCover => "sausage",
            ExperimentKind::Hitting => "hitting",
            ExperimentKind::ExitTime => "exit",
            ExperimentKind::IidCover => "iid",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::TorusCover => "torus",
            ExperimentKind::SeriesScan => "series",
            ExperimentKind::LilStatistic => "lil",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment {s:?}")))
    }
}

/// Every accepted key: `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("experiment", "", "experiment kind: srw-cover, sausage-cover, hitting, exit-time, iid-cover, coupling, torus-cover, series-scan, lil-statistic"),
    ("seed", "1", "64-bit master seed"),
    ("out", "", "output prefix; records go to PREFIX.jsonl and the summary to PREFIX.csv"),
    ("workers", "0", "worker threads (0 = all cores)"),
    ("budget_steps", "", "per-run cap on walk moves or driver calls, overriding each kind's default"),
    ("srw.r", "30", "disk radii, comma separated (r ≥ 8)"),
    ("srw.samples", "200", "runs per radius"),
    ("srw.engine", "accelerated", "accelerated or direct"),
    ("srw.far_field", "8", "return-leg landing radius in units of r, or off"),
    ("srw.checkpoint_ratio", "2", "ratio between cover-radius checkpoints, or off"),
    ("sausage.r", "30", "disk radii, comma separated (r ≥ 8)"),
    ("sausage.samples", "100", "runs per radius"),
    ("sausage.R", "0.1", "R in the outer radius 2R℘(r); needs R(log r)³ > 1"),
    ("sausage.outer", "", "explicit outer radius, overriding 2R℘(r)"),
    ("sausage.radius", "1", "sausage radius a"),
    ("sausage.dt", "0.01", "coarse time step (≤ 0.01a²)"),
    ("sausage.level", "0", "refinement level; the path is sampled at dt/2^level near the disk"),
    ("sausage.h", "0.2", "coverage cell size (≤ 0.2a)"),
    ("hitting.rho", "8", "inner radius ρ"),
    ("hitting.r", "40", "start circle radius r"),
    ("hitting.P", "200", "outer radius P"),
    ("hitting.samples", "10000", "walks"),
    ("hitting.batch", "1000", "walks per record"),
    ("hitting.engine", "accelerated", "accelerated or direct"),
    ("hitting.start", "fixed", "fixed (axis point) or symmetrized (cycle the 8 lattice symmetries)"),
    ("exit.process", "srw", "srw or brownian"),
    ("exit.r", "50", "disk radii, comma separated"),
    ("exit.samples", "2000", "runs per radius"),
    ("exit.eps", "0.25", "tail window exponent ε: outside (r^(2−ε), r^(2+ε))"),
    ("exit.engine", "accelerated", "walk engine for srw"),
    ("exit.dt", "0.001", "coarse time step for brownian"),
    ("exit.level", "0", "refinement level for brownian"),
    ("iid.r", "40", "disk radius (r ≥ 16)"),
    ("iid.k", "", "set counts k, comma separated; the union of sets 0..=k is tested"),
    ("iid.k_factor", "0.33,1.33", "set counts as multiples of φ_r (floored), used when iid.k is absent"),
    ("iid.kind", "c", "set family: c, e, f or biased"),
    ("iid.samples", "200", "trials per k"),
    ("coupling.r", "30", "disk radius (r ≥ 16)"),
    ("coupling.samples", "500", "coupled runs"),
    ("coupling.c1", "", "c₁; fitted from the exact biased-start deviation when absent"),
    ("coupling.u", "1", "record at least ⌈u·φ_r⌉ ξ draws"),
    ("coupling.max_sets", "100000", "cap on the E, F and coupled sequences"),
    ("torus.eps", "0.02", "ε values, comma separated (0 < ε ≤ 0.05)"),
    ("torus.dt", "", "time step; ε²/25 when absent"),
    ("torus.samples", "50", "runs per ε"),
    ("series.lambda", "0.2,0.25,0.3", "λ values, comma separated"),
    ("series.alpha", "1.1", "schedule ratio α > 1"),
    ("series.eps1", "0", "ε₁"),
    ("series.eps2", "0", "ε₂"),
    ("series.n", "5,10,20,40", "schedule indices n for the event probabilities"),
    ("lil.input", "", "record file (.jsonl) from an srw-cover or sausage-cover run"),
];

/// Text for `--help`.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys (key=value, one per line, # comments):\n");
    for (k, d, text) in KEYS {
        if d.is_empty() {
            s.push_str(&format!("  {k:<22} {text}\n"));
        } else {
            s.push_str(&format!("  {k:<22} {text} [default {d}]\n"));
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub budget_steps: Option<u64>,
    /// Kind-specific keys as given, without their prefix.
    pub params: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig { experiment, seed: 1, out: None, workers: 0, budget_steps: None, params: BTreeMap::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            if raw.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key {}", no + 1, k.trim())));
            }
        }
        let kind: ExperimentKind =
            raw.remove("experiment").ok_or_else(|| Error::config("missing key experiment"))?.parse()?;
        let mut cfg = ExperimentConfig::new(kind);
        for (k, v) in raw {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key; kind-specific keys must carry this kind's prefix.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "workers" => self.workers = parse_num(key, value)?,
            "budget_steps" => self.budget_steps = Some(parse_num(key, value)?),
            _ => {
                if !KEYS.iter().any(|(k, _, _)| *k == key) {
                    return Err(Error::config(format!("unknown key {key:?}")));
                }
                let prefix = self.experiment.prefix();
                let rest = key
                    .strip_prefix(prefix)
                    .and_then(|r| r.strip_prefix('.'))
                    .ok_or_else(|| Error::config(format!("key {key:?} does not apply to {}", self.experiment)))?;
                self.params.insert(rest.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    fn raw(&self, name: &str) -> Option<&str> {
        if let Some(v) = self.params.get(name) {
            return Some(v.as_str());
        }
        let full = format!("{}.{name}", self.experiment.prefix());
        KEYS.iter().find(|(k, _, _)| *k == full).map(|(_, d, _)| *d).filter(|d| !d.is_empty())
    }

    fn full(&self, name: &str) -> String {
        format!("{}.{name}", self.experiment.prefix())
    }

    /// A parameter, falling back to its documented default.
    pub fn get<T: FromStr>(&self, name: &str) -> Result<T> {
        let v = self.raw(name).ok_or_else(|| Error::config(format!("missing key {}", self.full(name))))?;
        parse_num(&self.full(name), v)
    }

    pub fn get_opt<T: FromStr>(&self, name: &str) -> Result<Option<T>> {
        match self.raw(name) {
            None => Ok(None),
            Some("off") => Ok(None),
            Some(v) => parse_num(&self.full(name), v).map(Some),
        }
    }

    pub fn get_list<T: FromStr>(&self, name: &str) -> Result<Vec<T>> {
        let v = self.raw(name).ok_or_else(|| Error::config(format!("missing key {}", self.full(name))))?;
        let xs: Result<Vec<T>> = v.split(',').map(|s| parse_num(&self.full(name), s.trim())).collect();
        let xs = xs?;
        if xs.is_empty() {
            return Err(Error::config(format!("{} is empty", self.full(name))));
        }
        Ok(xs)
    }

    pub fn has(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("bad value {v:?} for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys() {
        let c = ExperimentConfig::parse("experiment=srw-cover\n# note\nsrw.r=30,60 \nsrw.samples=5\nseed=42\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::SrwCover);
        assert_eq!(c.seed, 42);
        assert_eq!(c.get_list::<f64>("r").unwrap(), vec![30.0, 60.0]);
        assert_eq!(c.get::<u64>("samples").unwrap(), 5);
        assert_eq!(c.get::<String>("engine").unwrap(), "accelerated");
        assert_eq!(c.get_opt::<f64>("far_field").unwrap(), Some(8.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("srw.r=30").is_err());
        assert!(ExperimentConfig::parse("experiment=nope").is_err());
        assert!(ExperimentConfig::parse("experiment=srw-cover\nsausage.r=30").is_err());
        assert!(ExperimentConfig::parse("experiment=srw-cover\nsrw.bogus=1").is_err());
        assert!(ExperimentConfig::parse("experiment=srw-cover\nseed=x").is_err());
        assert!(ExperimentConfig::parse("experiment=srw-cover\nseed=1\nseed=2").is_err());
        assert!(ExperimentConfig::parse("experiment=srw-cover\njunk").is_err());
        let c = ExperimentConfig::parse("experiment=srw-cover\nsrw.r=30,abc").unwrap();
        assert!(c.get_list::<f64>("r").is_err());
    }

    #[test]
    fn every_kind_has_documented_keys() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
            assert!(KEYS.iter().any(|(key, _, _)| key.starts_with(&format!("{}.", k.prefix()))));
        }
        assert!(keys_help().contains("srw.samples"));
    }
}

//! The running statistic `(log R)² / (log n · log₃ n)` over cover-radius
//! checkpoints. A trend exhibit only: the limit it tracks is an
//! infinite-time statement, so nothing here passes or fails.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentKind;
use super::record::{value_f64, RunRecord};
use crate::error::{Error, Result};
use crate::scales;

pub const LIL_HEADER: &str = "run,group,n,cover_radius,statistic,running_max";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilRow {
    pub run: u64,
    pub group: String,
    /// Walk steps, or Brownian time for sausage records.
    pub n: f64,
    pub cover_radius: f64,
    pub statistic: f64,
    pub running_max: f64,
}

/// Checkpoints with `n ≤ e^e` or a cover radius below 1 are omitted.
pub fn lil_statistic_report(records: &[RunRecord]) -> Result<Vec<LilRow>> {
    let mut rows = Vec::new();
    for rec in records {
        if !matches!(rec.experiment, ExperimentKind::SrwCover | ExperimentKind::SausageCover) {
            return Err(Error::config(format!("lil report needs srw-cover or sausage-cover records, got {}", rec.experiment)));
        }
        let Some(cps) = rec.diagnostics.get("checkpoints").and_then(|v| v.as_array()) else {
            continue;
        };
        let mut running = f64::NEG_INFINITY;
        for cp in cps {
            let pair = cp.as_array().filter(|p| p.len() == 2);
            let Some((n, rho)) = pair.and_then(|p| Some((value_f64(&p[0])?, value_f64(&p[1])?))) else {
                return Err(Error::config(format!("run {}: malformed checkpoint {cp}", rec.run)));
            };
            if !n.is_finite() {
                continue;
            }
            let Ok(stat) = scales::lil_statistic(n, rho) else { continue };
            running = running.max(stat);
            rows.push(LilRow { run: rec.run, group: rec.group_label(), n, cover_radius: rho, statistic: stat, running_max: running });
        }
    }
    Ok(rows)
}

pub fn write_lil<W: Write>(w: &mut W, rows: &[LilRow]) -> Result<()> {
    writeln!(w, "{LIL_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.run, r.group, r.n, r.cover_radius, r.statistic, r.running_max)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::record::{f64_value, SCHEMA};
    use crate::rng::StreamKey;
    use std::collections::BTreeMap;

    fn record(cps: &[(f64, f64)]) -> RunRecord {
        let arr = cps.iter().map(|&(n, r)| serde_json::Value::Array(vec![f64_value(n), f64_value(r)])).collect();
        RunRecord {
            schema: SCHEMA.into(),
            experiment: ExperimentKind::SrwCover,
            params: BTreeMap::from([("r".to_string(), f64_value(8.0))]),
            run: 0,
            seed: StreamKey::new(0, 0),
            outputs: BTreeMap::new(),
            diagnostics: BTreeMap::from([("checkpoints".to_string(), serde_json::Value::Array(arr))]),
            error: None,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn statistic_values_and_running_max() {
        let rows = lil_statistic_report(&[record(&[(10.0, 2.0), (1e6, 5.0), (1e7, 1.0), (1e8, 7.0), (f64::INFINITY, 8.0)])]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].statistic - 0.19422).abs() < 1e-4);
        assert_eq!(rows[1].statistic, 0.0);
        assert!(rows.windows(2).all(|w| w[0].running_max <= w[1].running_max));
        let mut out = Vec::new();
        write_lil(&mut out, &rows).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
    }

    #[test]
    fn other_kinds_are_rejected() {
        let mut r = record(&[]);
        r.experiment = ExperimentKind::Hitting;
        assert!(lil_statistic_report(&[r]).is_err());
    }
}

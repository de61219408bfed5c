//! Run records (one JSON object per line) and CSV summaries.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentKind;
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stats;

pub const SCHEMA: &str = "covlab.run/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub experiment: ExperimentKind,
    /// Parameters of this run's group, for example `r`.
    pub params: BTreeMap<String, Value>,
    pub run: u64,
    pub seed: StreamKey,
    pub outputs: BTreeMap<String, Value>,
    pub diagnostics: BTreeMap<String, Value>,
    /// Set when the run failed, for example on an exhausted budget.
    pub error: Option<String>,
    /// Excluded from the determinism contract.
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn group_label(&self) -> String {
        group_label(&self.params)
    }

    /// The record with its wall time zeroed, for determinism checks.
    pub fn without_wall_time(&self) -> RunRecord {
        RunRecord { wall_ms: 0.0, ..self.clone() }
    }

    pub fn output_f64(&self, key: &str) -> Option<f64> {
        self.outputs.get(key).and_then(value_f64)
    }
}

/// `k=v` pairs joined with `;` in key order.
pub fn group_label(params: &BTreeMap<String, Value>) -> String {
    params.iter().map(|(k, v)| format!("{k}={}", value_text(v))).collect::<Vec<_>>().join(";")
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Numbers, plus the strings `inf`, `-inf` and `nan` used for non-finite values.
pub fn value_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::Bool(b) => Some(*b as u8 as f64),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// JSON has no infinities; those become strings.
pub fn f64_value(x: f64) -> Value {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

pub fn write_record<W: Write + ?Sized>(w: &mut W, rec: &RunRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(&line)?;
        if rec.schema != SCHEMA {
            return Err(Error::config(format!("line {}: unsupported schema {:?}", no + 1, rec.schema)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub const SUMMARY_HEADER: &str = "experiment,group,metric,count,failed,mean,std_error,median,q05,q95";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: ExperimentKind,
    pub group: String,
    pub metric: String,
    /// Successful runs with a value for this metric.
    pub count: u64,
    /// Failed runs in the group.
    pub failed: u64,
    pub mean: f64,
    pub std_error: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            csv_field(&self.group),
            csv_field(&self.metric),
            self.count,
            self.failed,
            self.mean,
            self.std_error,
            self.median,
            self.q05,
            self.q95
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per group and numeric output, in group order of first appearance
/// and metric name order.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(ExperimentKind, String)> = Vec::new();
    let mut values: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    let mut failed: BTreeMap<usize, u64> = BTreeMap::new();
    for rec in records {
        let key = (rec.experiment, rec.group_label());
        let gi = match groups.iter().position(|g| *g == key) {
            Some(i) => i,
            None => {
                groups.push(key);
                groups.len() - 1
            }
        };
        if rec.error.is_some() {
            *failed.entry(gi).or_default() += 1;
            continue;
        }
        for (k, v) in &rec.outputs {
            if let Some(x) = value_f64(v) {
                values.entry((gi, k.clone())).or_default().push(x);
            }
        }
    }
    let mut rows = Vec::new();
    for (gi, (kind, label)) in groups.iter().enumerate() {
        let nf = failed.get(&gi).copied().unwrap_or(0);
        let mut any = false;
        for ((g, metric), xs) in values.range((gi, String::new())..) {
            if *g != gi {
                break;
            }
            any = true;
            let (mean, se) = stats::mean_se(xs);
            let s = stats::sorted(xs);
            rows.push(SummaryRow {
                experiment: *kind,
                group: label.clone(),
                metric: metric.clone(),
                count: xs.len() as u64,
                failed: nf,
                mean,
                std_error: se,
                median: stats::quantile_sorted(&s, 0.5),
                q05: stats::quantile_sorted(&s, 0.05),
                q95: stats::quantile_sorted(&s, 0.95),
            });
        }
        if !any {
            rows.push(SummaryRow {
                experiment: *kind,
                group: label.clone(),
                metric: "-".into(),
                count: 0,
                failed: nf,
                mean: f64::NAN,
                std_error: f64::NAN,
                median: f64::NAN,
                q05: f64::NAN,
                q95: f64::NAN,
            });
        }
    }
    rows
}

pub fn write_summary<W: Write>(w: &mut W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(run: u64, r: f64, n: f64, err: bool) -> RunRecord {
        RunRecord {
            schema: SCHEMA.into(),
            experiment: ExperimentKind::SrwCover,
            params: BTreeMap::from([("r".to_string(), f64_value(r))]),
            run,
            seed: StreamKey::new(1, run),
            outputs: BTreeMap::from([("N_r".to_string(), f64_value(n)), ("T_r".to_string(), f64_value(f64::INFINITY))]),
            diagnostics: BTreeMap::new(),
            error: err.then(|| "budget".to_string()),
            wall_ms: 1.5,
        }
    }

    #[test]
    fn records_round_trip_with_infinities() {
        let recs = vec![rec(0, 30.0, 3.0, false), rec(1, 30.0, 5.0, true)];
        let mut buf = Vec::new();
        for r in &recs {
            write_record(&mut buf, r).unwrap();
        }
        let back = read_records(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].output_f64("T_r"), Some(f64::INFINITY));
    }

    #[test]
    fn summary_folds_groups() {
        let recs: Vec<RunRecord> =
            (0..10).map(|i| rec(i, if i % 2 == 0 { 30.0 } else { 60.0 }, i as f64, i == 9)).collect();
        let rows = summarize(&recs);
        let n30: Vec<&SummaryRow> = rows.iter().filter(|r| r.group == "r=30.0" && r.metric == "N_r").collect();
        assert_eq!(n30.len(), 1);
        assert_eq!(n30[0].count, 5);
        assert_eq!(n30[0].mean, 4.0);
        assert_eq!(n30[0].median, 4.0);
        let n60 = rows.iter().find(|r| r.group == "r=60.0" && r.metric == "N_r").unwrap();
        assert_eq!((n60.count, n60.failed), (4, 1));
        let csv = |rs: &[SummaryRow]| rs.iter().map(SummaryRow::to_csv).collect::<Vec<_>>();
        assert_eq!(csv(&rows), csv(&summarize(&recs)));
        let mut out = Vec::new();
        write_summary(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(SUMMARY_HEADER));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let mut r = rec(0, 30.0, 1.0, false);
        r.schema = "covlab.run/0".into();
        let mut buf = Vec::new();
        write_record(&mut buf, &r).unwrap();
        assert!(read_records(std::io::Cursor::new(buf)).is_err());
    }
}

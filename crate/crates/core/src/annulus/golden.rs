//! Versioned table of exact solver values.
//!
//! One tab-separated record per line: `problem`, `params`, `value`, `residual`.
//! Lines starting with `#` are comments; the first must be the version header.

use std::path::Path;

use crate::annulus::{axis_boundary_point, biased_start_deviation, exact_hit_origin_prob, exact_hit_prob, SolverOptions};
use crate::error::{Error, Result};
use crate::lattice::LatticePoint;
use crate::scales::wp;

pub const HEADER: &str = "# covlab annulus golden v1";

#[derive(Clone, Debug, PartialEq)]
pub struct GoldenRecord {
    pub problem: String,
    pub params: String,
    pub value: f64,
    pub residual: f64,
}

impl GoldenRecord {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{:.17e}\t{:.3e}", self.problem, self.params, self.value, self.residual)
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::config(format!("golden line needs 4 fields: {line}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::config(format!("bad number {s}: {e}")));
        Ok(GoldenRecord { problem: f[0].into(), params: f[1].into(), value: num(f[2])?, residual: num(f[3])? })
    }
}

pub fn render(records: &[GoldenRecord]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

pub fn parse_table(text: &str) -> Result<Vec<GoldenRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::config("golden table has a missing or unknown version header"));
    }
    lines.filter(|l| !l.trim().is_empty() && !l.starts_with('#')).map(GoldenRecord::parse).collect()
}

pub fn load(path: &Path) -> Result<Vec<GoldenRecord>> {
    parse_table(&std::fs::read_to_string(path)?)
}

/// Recomputes every tabulated instance.
pub fn compute_table(opts: &SolverOptions) -> Result<Vec<GoldenRecord>> {
    let mut out = Vec::new();
    for (rho, r, p, x) in [(1.0, 2.0, 4.0, 3), (2.0, 5.0, 20.0, 6), (8.0, 40.0, 200.0, 41)] {
        let h = exact_hit_prob(rho, r, p, LatticePoint::new(x, 0), opts)?;
        out.push(GoldenRecord {
            problem: "hit_prob".into(),
            params: format!("rho={rho},r={r},P={p},start=({x},0)"),
            value: h.value,
            residual: h.residual,
        });
    }
    for (p, x) in [(4.0, 2), (100.0, 11)] {
        let h = exact_hit_origin_prob(p, LatticePoint::new(x, 0), opts)?;
        out.push(GoldenRecord {
            problem: "hit_origin".into(),
            params: format!("P={p},start=({x},0)"),
            value: h.value,
            residual: h.residual,
        });
    }
    let z = axis_boundary_point(wp(8.0)?)?;
    let d = biased_start_deviation(8.0, z, opts)?;
    out.push(GoldenRecord {
        problem: "biased_start_deviation".into(),
        params: format!("r=8,start=({},{})", z.x, z.y),
        value: d.deviation,
        residual: d.residual,
    });
    Ok(out)
}

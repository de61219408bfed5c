//! Exact solver values against the checked-in table.
//! `COVLAB_BLESS=1 cargo test --test golden_annulus` rewrites the table.

use std::path::PathBuf;

use covlab_core::annulus::golden::{compute_table, load, parse_table, render};
use covlab_core::annulus::SolverOptions;

fn table_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("golden/annulus_v1.tsv")
}

#[test]
fn solver_matches_golden_table() {
    let fresh = compute_table(&SolverOptions::default()).unwrap();
    let path = table_path();
    if std::env::var("COVLAB_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, render(&fresh)).unwrap();
    }
    let stored = load(&path).unwrap();
    assert_eq!(stored.len(), fresh.len());
    for (s, f) in stored.iter().zip(&fresh) {
        assert_eq!((&s.problem, &s.params), (&f.problem, &f.params));
        assert!((s.value - f.value).abs() <= 1e-10, "{}: stored {} now {}", s.params, s.value, f.value);
        assert!(f.residual <= 1e-10, "{}: residual {}", s.params, f.residual);
    }
    assert_eq!(parse_table(&render(&stored)).unwrap(), stored);
}

#[test]
fn table_without_header_is_rejected() {
    assert!(parse_table("hit_prob\tx\t0.5\t0\n").is_err());
    assert!(parse_table("# covlab annulus golden v0\n").is_err());
}

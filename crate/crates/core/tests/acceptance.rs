//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` fail at desk scale for reasons recorded in
//! the README; they are reported as FAIL but do not fail the target. Any
//! other failure does.

use covlab_core::verify::{Verifier, VerifyOptions};

const KNOWN_RED: &[u32] = &[3, 4, 5, 10];

fn main() {
    let mut v = Verifier::new(VerifyOptions::default());
    let results = v.run_all(|r| println!("{}", r.line()));
    let passed = results.iter().filter(|r| r.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    let unexpected: Vec<u32> = results.iter().filter(|r| !r.pass && !KNOWN_RED.contains(&r.id)).map(|r| r.id).collect();
    for r in results.iter().filter(|r| r.pass && KNOWN_RED.contains(&r.id)) {
        println!("note: criterion {} is listed as known red but passed", r.id);
    }
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures in criteria {unexpected:?}");
        std::process::exit(1);
    }
}

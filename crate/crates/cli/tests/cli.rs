use std::process::Command;

fn covlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covlab"))
}

#[test]
fn help_lists_every_config_key() {
    let out = covlab().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["srw.r", "sausage.R", "hitting.P", "exit.dt", "iid.k_factor", "coupling.c1", "torus.eps", "series.lambda", "lil.input", "budget_steps"] {
        assert!(text.contains(key), "{key} missing from --help");
    }
}

#[test]
fn config_errors_exit_1() {
    let bad_radius = covlab().args(["simulate", "srw-cover", "--param", "srw.r=4"]).output().unwrap();
    assert_eq!(bad_radius.status.code(), Some(1));
    let foreign_key = covlab().args(["estimate", "hitting", "-p", "srw.r=30"]).output().unwrap();
    assert_eq!(foreign_key.status.code(), Some(1));
    let usage = covlab().args(["simulate", "nothing"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn runs_write_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("srw.conf");
    std::fs::write(&cfg, "experiment=srw-cover\nsrw.r=8\nsrw.samples=3\nseed=9\n").unwrap();
    let prefix = dir.path().join("run");
    let out = covlab().args(["simulate", "srw-cover", "--workers", "2", "--config"]).arg(&cfg).arg("--out").arg(&prefix).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(dir.path().join("run.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 3);
    let summary = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(summary.starts_with("experiment,group,metric,count,failed,mean,std_error,median,q05,q95"));
    assert!(summary.contains("srw-cover,r=8.0,N_over_phi,3,0,"));

    let lil = dir.path().join("lil");
    let rep = covlab().args(["report", "lil", "--input"]).arg(dir.path().join("run.jsonl")).arg("--out").arg(&lil).output().unwrap();
    assert!(rep.status.success());
    assert!(std::fs::read_to_string(dir.path().join("lil.csv")).unwrap().starts_with("run,group,n,cover_radius,statistic,running_max"));

    let mismatch = covlab().args(["estimate", "hitting", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(1));
}

#[test]
fn verify_reports_each_selected_criterion() {
    let out = covlab().args(["verify", "all", "--only", "11,7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS criterion 11") && text.contains("PASS criterion  7"));
    let red = covlab().args(["verify", "all", "--only", "3"]).output().unwrap();
    assert_eq!(red.status.code(), Some(2));
    assert!(String::from_utf8(red.stdout).unwrap().contains("FAIL criterion  3"));
    let bad = covlab().args(["verify", "all", "--only", "13"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

use std::fs;
use std::path::Path;
use std::process::Command;

use sbmlab::config::KindParams;
use sbmlab::report::Status;
use sbmlab::runner::{compute_report, merge_loaded};
use sbmlab::{merge_reports, parse_config, run_experiment, Kind};

fn parse(text: &str) -> Result<sbmlab::ExperimentConfig, sbmlab::ConfigError> {
    parse_config(text, Path::new("."), None)
}

const SIMULATE: &str = "
kind = simulate
beta = 0.5
N = 50
t_end = 0.2
";

#[test]
fn minimal_simulate_config_gets_defaults() {
    let c = parse(SIMULATE).unwrap();
    assert_eq!(c.kind, Kind::Simulate);
    assert_eq!(c.replicas, 1);
    assert_eq!(c.seed, 0);
    assert_eq!(c.workers, 1);
    assert_eq!(c.model.dim, 1);
    assert_eq!(c.model.dt, None);
    assert_eq!(c.initial().total_mass(), 1.0);
    match c.params {
        KindParams::Simulate { functions, times } => {
            assert_eq!(functions.len(), 2);
            assert_eq!(times, vec![0.2]);
        }
        _ => panic!("wrong kind"),
    }
}

#[test]
fn dt_violating_cap_names_both_values() {
    let e = parse(&format!("{SIMULATE}dt = 0.5\n")).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("dt = 0.5"), "{msg}");
    assert!(msg.contains("branch_rate = "), "{msg}");
}

#[test]
fn beta_one_is_a_domain_error() {
    let e = parse(&SIMULATE.replace("beta = 0.5", "beta = 1.0")).unwrap_err();
    assert!(e.errors.iter().any(|m| m.contains("beta must lie in (0,1)")), "{e}");
}

#[test]
fn all_problems_are_reported_together() {
    let text = "
kind = jumps
beta = 0.5
t_end = 0.2
colour = red
[jumps]
slope_tol = 0.1
flavour = 3
[tanaka]
typo = 1
";
    let e = parse(text).unwrap_err();
    let all = e.to_string();
    assert!(all.contains("missing required key `N`"), "{all}");
    assert!(all.contains("missing required key `y`"), "{all}");
    assert!(all.contains("colour"), "{all}");
    assert!(all.contains("flavour"), "{all}");
    assert!(all.contains("typo"), "{all}");
    assert!(e.errors.len() >= 5);
}

#[test]
fn unknown_section_and_bad_lines() {
    let e = parse(&format!("{SIMULATE}[nonsense]\nthis is not a pair\n")).unwrap_err();
    let all = e.to_string();
    assert!(all.contains("unknown section [nonsense]"), "{all}");
    assert!(all.contains("expected `key = value`"), "{all}");
}

#[test]
fn command_line_kind_must_match_file() {
    assert!(parse_config(SIMULATE, Path::new("."), Some(Kind::Jumps)).is_err());
    assert!(parse_config(SIMULATE, Path::new("."), Some(Kind::Simulate)).is_ok());
}

#[test]
fn missing_initial_file_is_an_error() {
    let e = parse(&format!("{SIMULATE}initial = /nonexistent/measure.txt\n")).unwrap_err();
    assert!(e.to_string().contains("/nonexistent/measure.txt"));
}

#[test]
fn initial_measure_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("mu.txt"), "atoms 2\n-1 0.5\n1 1.5\n").unwrap();
    let c = parse_config(&format!("{SIMULATE}initial = mu.txt\n"), dir.path(), None).unwrap();
    assert_eq!(c.initial().total_mass(), 2.0);
}

#[test]
fn zero_horizon_reports_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = parse(&SIMULATE.replace("t_end = 0.2", "t_end = 0")).unwrap();
    c.out_dir = dir.path().to_path_buf();
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.replicas.len(), 1);
    let mass = r.analysis.stat("x[mass](0)").unwrap();
    assert_eq!(mass.mean, 1.0);
    assert_eq!(r.analysis.stat("events").unwrap().mean, 0.0);
    assert!(r.all_checks_pass());
    for a in &r.artifacts {
        assert!(dir.path().join(a).exists(), "{a}");
    }
}

fn numeric_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

const TANAKA: &str = "
kind = tanaka
beta = 0.5
N = 100
t_end = 0.1
replicas = 6
seed = 3
[tanaka]
lambda = 0.5, 2
x = 0.25, 0.5
panel_points = 81
";

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = parse(TANAKA).unwrap();
    c.out_dir = a.path().to_path_buf();
    run_experiment(&c).unwrap();
    c.out_dir = b.path().to_path_buf();
    c.workers = 3;
    run_experiment(&c).unwrap();
    let (fa, fb) = (numeric_files(a.path()), numeric_files(b.path()));
    assert!(fa.len() >= 4);
    assert_eq!(fa, fb);
}

#[test]
fn worker_count_does_not_change_statistics() {
    let mut c = parse(&format!("{}replicas = 200\nseed = 11\n[jumps]\ny = 0.05, 0.1\n", "kind = jumps\nbeta = 0.5\nN = 40\nt_end = 0.1\n")).unwrap();
    c.workers = 1;
    let one = compute_report(&c).unwrap();
    c.workers = 8;
    let eight = compute_report(&c).unwrap();
    assert_eq!(one.analysis, eight.analysis);
    assert_eq!(one.replicas, eight.replicas);
}

fn jumps_cfg(first: u64, n: usize) -> sbmlab::ExperimentConfig {
    let mut c = parse("kind = jumps\nbeta = 0.5\nN = 40\nt_end = 0.1\nseed = 5\n[jumps]\ny = 0.05, 0.1\n").unwrap();
    c.first_replica = first;
    c.replicas = n;
    c
}

#[test]
fn merging_split_runs_equals_one_run() {
    let whole = compute_report(&jumps_cfg(0, 200)).unwrap();
    let a = compute_report(&jumps_cfg(0, 100)).unwrap();
    let b = compute_report(&jumps_cfg(100, 100)).unwrap();
    assert_eq!(a.config_hash, whole.config_hash);
    let ab = merge_loaded(vec![a.clone(), b.clone()]).unwrap();
    let ba = merge_loaded(vec![b, a.clone()]).unwrap();
    assert_eq!(ab.analysis, whole.analysis);
    assert_eq!(ab.analysis, ba.analysis);
    assert_eq!(ab.replicas, ba.replicas);
    let single = merge_loaded(vec![a.clone()]).unwrap();
    assert_eq!(single.analysis, a.analysis);
}

#[test]
fn merge_from_disk_and_hash_mismatch() {
    let (da, db, dc) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut a = jumps_cfg(0, 20);
    a.out_dir = da.path().to_path_buf();
    let mut b = jumps_cfg(20, 20);
    b.out_dir = db.path().to_path_buf();
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    let merged = merge_reports(&[da.path().join("report.json"), db.path().join("report.json")]).unwrap();
    assert_eq!(merged.replicas.len(), 40);
    assert_eq!(merged.analysis, compute_report(&jumps_cfg(0, 40)).unwrap().analysis);

    let mut c = jumps_cfg(40, 20);
    c.seed = 6;
    c.out_dir = dc.path().to_path_buf();
    run_experiment(&c).unwrap();
    let err = merge_reports(&[da.path().join("report.json"), dc.path().join("report.json")]).unwrap_err();
    assert!(err.to_string().contains("config hash mismatch"));
    let dup = merge_reports(&[da.path().join("report.json"), da.path().join("report.json")]).unwrap_err();
    assert!(dup.to_string().contains("more than one report"));
}

#[test]
fn artifacts_carry_schema_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = jumps_cfg(0, 10);
    c.out_dir = dir.path().to_path_buf();
    let r = run_experiment(&c).unwrap();
    for name in ["summary.csv", "derived.csv", "jumps.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, format!("# schema=1 config_hash={} kind=jumps", r.config_hash));
    }
    let lines = fs::read_to_string(dir.path().join("replicas.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 10);
    assert!(!dir.path().join("report.json.tmp").exists());
}

#[test]
fn cap_overflow_is_censored_and_degrades() {
    // Cap just above the initial count: most replicas grow past it.
    let mut c = parse("kind = simulate\nbeta = 0.5\nN = 50\nt_end = 0.3\nparticle_cap = 52\nreplicas = 20\n").unwrap();
    c.seed = 1;
    let r = compute_report(&c).unwrap();
    assert!(r.censoring_rate > 0.05, "{}", r.censoring_rate);
    assert_eq!(r.status, Status::Degraded);
    assert!(r.replicas.iter().any(|s| s.censored && s.note.is_some()));
}

#[test]
fn criterion_runs_without_replicas() {
    let c = parse("kind = criterion\nbeta = 0.5\n[criterion]\ngamma = 0.2\nq = 1.4\nflag_points = 200\n").unwrap();
    let r = compute_report(&c).unwrap();
    assert!(r.replicas.is_empty());
    assert!(r.all_checks_pass(), "{:?}", r.analysis.checks);
    let g = r.analysis.derived_value("g_closed").unwrap();
    assert!((g - 3.0 / (1.0 - 2f64.powf(-0.2))).abs() < 1e-12);
}

#[test]
fn report_json_roundtrips_nan() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = parse("kind = unbounded2d\nbeta = 0.5\nN = 20\nt_end = 0.05\nreplicas = 2\n[unbounded2d]\nwindow_lo = 5\nwindow_hi = 5.8\n").unwrap();
    c.out_dir = dir.path().to_path_buf();
    let r = run_experiment(&c).unwrap();
    assert!(r.replicas[0].values[0].is_nan());
    let back = sbmlab::report::read_report(&dir.path().join("report.json")).unwrap();
    assert!(back.replicas[0].values[0].is_nan());
    assert_eq!(back.config, r.config);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbmlab"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "beta = 1.5\nN = 10\nt_end = 0.1\n").unwrap();
    let s = bin().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(s.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&s.stderr).contains("beta"));

    let good = dir.path().join("good.cfg");
    fs::write(&good, "beta = 0.5\nN = 30\nt_end = 0.05\n").unwrap();
    let out = dir.path().join("out");
    let s = bin()
        .args(["simulate", "--replicas", "3", "--workers", "2", "--seed", "9", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(out.join("report.json").exists());

    let capped = dir.path().join("capped.cfg");
    fs::write(&capped, "beta = 0.5\nN = 50\nt_end = 0.3\nparticle_cap = 52\nreplicas = 20\nseed = 1\n").unwrap();
    let s = bin().args(["simulate", "--config"]).arg(&capped).arg("--out").arg(dir.path().join("c")).output().unwrap();
    assert_eq!(s.status.code(), Some(3));

    // Threshold far below the resolved range: the compensator check fails.
    let jumps = dir.path().join("jumps.cfg");
    fs::write(&jumps, "beta = 0.5\nN = 30\nt_end = 0.05\nreplicas = 5\n[jumps]\ny = 0.001, 0.002\n").unwrap();
    let s = bin().args(["jumps", "--check", "--config"]).arg(&jumps).arg("--out").arg(dir.path().join("j")).output().unwrap();
    assert_eq!(s.status.code(), Some(4), "{}", String::from_utf8_lossy(&s.stdout));

    let s = bin()
        .arg("merge")
        .arg(out.join("report.json"))
        .arg("--out")
        .arg(dir.path().join("m"))
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "cfg") {
            sbmlab::load_config(&p, None).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert_eq!(n, Kind::ALL.len());
}

//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any criterion fails.
//!
//! Run with `cargo test --release -p sbmlab --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use sbmlab::report::RunReport;
use sbmlab::runner::{compute_report, merge_loaded, write_artifacts};
use sbmlab::{parse_config, ExperimentConfig};
use sbmlab_core::continuity_lab::holder_exponent;
use sbmlab_core::kernels_green::{g_lambda, green_closed, green_numeric};
use sbmlab_core::rng_stable::{OffspringLaw, RngStream};
use sbmlab_core::stats::fit_line;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn config(text: &str) -> ExperimentConfig {
    let mut c = parse_config(text, Path::new("."), None).unwrap_or_else(|e| panic!("{e}"));
    c.workers = workers();
    c
}

fn run(text: &str) -> RunReport {
    compute_report(&config(text)).unwrap_or_else(|e| panic!("{e:#}"))
}

fn failed_checks(r: &RunReport) -> Vec<String> {
    r.analysis.checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect()
}

fn derived(r: &RunReport, name: &str) -> f64 {
    r.analysis.derived_value(name).unwrap_or_else(|| panic!("no derived value {name}"))
}

fn green_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for lambda in [0.25, 1.0, 4.0] {
        for i in 0..200 {
            let x = -5.0 + 10.0 * i as f64 / 199.0;
            let d = (green_numeric(lambda, x).unwrap() - green_closed(lambda, x)).abs();
            worst = worst.max(d);
        }
    }
    outcome(worst < 1e-8, format!("max error {worst:.3e}"))
}

fn lipschitz() -> Outcome {
    let mut s = RngStream::new(2024, 0);
    let (mut v_green, mut v_g) = (0, 0);
    for _ in 0..10_000 {
        let lambda = 0.05 + 5.0 * s.next_f64();
        let (x, y) = (-4.0 + 8.0 * s.next_f64(), -4.0 + 8.0 * s.next_f64());
        if (green_closed(lambda, x) - green_closed(lambda, y)).abs() > (x - y).abs() * (1.0 + 1e-12) {
            v_green += 1;
        }
        let (x1, x2) = (x.min(y), x.max(y));
        // A point outside [x1, x2] on either side.
        let off = 3.0 * s.next_f64();
        let z = if s.next_f64() < 0.5 { x1 - off } else { x2 + off };
        let diff = (g_lambda(lambda, z - x1) - g_lambda(lambda, z - x2)).abs();
        if diff > (2.0 * lambda).sqrt() * (x2 - x1) * (1.0 + 1e-12) {
            v_g += 1;
        }
    }
    outcome(v_green == 0 && v_g == 0, format!("{v_green} resolvent and {v_g} derivative violations in 10^4 pairs"))
}

fn offspring() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.3, 0.5, 0.8] {
        let law = OffspringLaw::new(beta).unwrap();
        let (mass_err, mean_err) = ((law.total_mass() - 1.0).abs(), (law.mean() - 1.0).abs());
        let n = 2_000_000;
        let mut s = RngStream::new(77, (beta * 10.0) as u64);
        let mut draws: Vec<u64> = (0..n).map(|_| law.sample(&mut s)).collect();
        draws.sort_unstable();
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        let mut k = 10u64;
        while k <= 10_000 {
            let above = n - draws.partition_point(|&d| d <= k);
            if above >= 50 {
                lx.push((k as f64).ln());
                ly.push((above as f64 / n as f64).ln());
            }
            k *= 2;
        }
        let slope = fit_line(&lx, &ly).map(|f| f.slope).unwrap_or(f64::NAN);
        let pass = mass_err < 1e-10 && mean_err < 1e-10 && (slope + 1.0 + beta).abs() <= 0.1;
        ok &= pass;
        parts.push(format!("β={beta}: |Σp-1|={mass_err:.1e} |mean-1|={mean_err:.1e} slope={slope:.3}"));
    }
    outcome(ok, parts.join("; "))
}

const DESK: &str = "beta = 0.5\nN = 4000\nt_end = 0.5\nreplicas = 400\nseed = 1\n";

fn duality() -> Outcome {
    let r = run(&format!(
        "kind = duality\n{DESK}[duality]\nphi_lo = -1\nphi_hi = 1\nphi_edge = 0.25\nphi_height = 0.5\n"
    ));
    let z = derived(&r, "z");
    outcome(
        z <= 3.0,
        format!("MC {:.5} vs solver {:.5}, z = {z:.3}", derived(&r, "lhs"), derived(&r, "rhs")),
    )
}

fn mean_formulas() -> Outcome {
    let r = run("kind = simulate\nbeta = 0.5\nN = 2000\nt_end = 1\nreplicas = 400\nseed = 2\nsnapshot_dt = 0.25\n[simulate]\nfunctions = gauss, tent\ntimes = 0.25, 1\n");
    let checks: Vec<_> = r.analysis.checks.iter().filter(|c| c.name.starts_with("mean_")).collect();
    let bad = failed_checks(&r);
    outcome(checks.len() == 8 && bad.is_empty(), format!("{} of {} mean checks within 3·SE {:?}", checks.len() - bad.len(), checks.len(), bad))
}

fn jump_compensator() -> Outcome {
    let r = run(&format!("kind = jumps\n{DESK}[jumps]\ny = 0.005, 0.01, 0.02, 0.04, 0.08\n"));
    let bad = failed_checks(&r);
    outcome(bad.is_empty(), format!("slope {:.4}; failing: {bad:?}", derived(&r, "slope")))
}

fn tanaka_text(n: u64, seed: u64) -> String {
    format!(
        "kind = tanaka\nbeta = 0.5\nN = {n}\nt_end = 0.5\nreplicas = 400\nseed = {seed}\n[tanaka]\nlambda = 0.5, 2\nx = 0.25, 0.5\n"
    )
}

// Standard error column of the tanaka table for (λ, x).
fn tanaka_se(r: &RunReport, l: &str, x: &str, q: &str) -> f64 {
    let t = r.analysis.tables.iter().find(|t| t.name == "tanaka").unwrap();
    let (l, x): (f64, f64) = (l.parse().unwrap(), x.parse().unwrap());
    let row = t.rows.iter().find(|row| row[0] == l && row[1] == x).unwrap();
    let col = if q == "abs_w" { "abs_w_se" } else { "kernel_minus_tanaka_se" };
    row[t.columns.iter().position(|c| c == col).unwrap()]
}

fn tanaka(reports: &[(u64, RunReport)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for l in ["0.5", "2"] {
        for x in ["0.25", "0.5"] {
            for q in ["abs_w", "kernel_gap"] {
                let v: Vec<f64> = reports.iter().map(|(_, r)| derived(r, &format!("{q}[{l};{x}]"))).collect();
                let se: Vec<f64> = reports.iter().map(|(_, r)| tanaka_se(r, l, x, q)).collect();
                let dec = v.windows(2).all(|w| w[1] < w[0]);
                ok &= dec;
                let seq: Vec<String> = v.iter().zip(&se).map(|(m, s)| format!("{m:.2e}±{s:.1e}")).collect();
                parts.push(format!("{q}[λ={l},x={x}] {} {}", seq.join(" > "), if dec { "ok" } else { "NOT decreasing" }));
            }
        }
    }
    let last = &reports.last().unwrap().1;
    for c in last.analysis.checks.iter().filter(|c| c.name.starts_with("lambda_robust")) {
        ok &= c.passed;
        parts.push(format!("{}: {}", c.name, c.detail));
    }
    outcome(ok, parts.join("; "))
}

fn moments() -> Outcome {
    let r = run(&format!("kind = moments\n{DESK}[moments]\nq = 1.2\n"));
    let slope = derived(&r, "slope");
    outcome(slope >= 0.85, format!("slope {slope:.4} ± {:.4} vs minimum 0.85", derived(&r, "slope_se")))
}

fn time_change() -> Outcome {
    let r = run(&format!("kind = timechange\n{DESK}"));
    let bad = failed_checks(&r);
    outcome(
        bad.is_empty(),
        format!(
            "max |z| {:.3}, bound violations {}; failing: {bad:?}",
            derived(&r, "max_z"),
            derived(&r, "bound_violations")
        ),
    )
}

fn stable_tails() -> Outcome {
    let r = run("kind = stabletails\nbeta = 0.5\nt_end = 1\nreplicas = 100000\nseed = 4\n[stabletails]\ninf_x = 0.5, 1, 1.5, 2, 2.5, 3, 3.5\n");
    let bad = failed_checks(&r);
    outcome(
        bad.is_empty(),
        format!(
            "inf slope {:.3} vs {:.3} ± 0.25; holdout violations {} with C = {:.4}",
            derived(&r, "inf_slope"),
            derived(&r, "inf_slope_target"),
            derived(&r, "holdout_violations"),
            derived(&r, "calibrated_c")
        ),
    )
}

fn criterion_series() -> Outcome {
    let r = run("kind = criterion\nbeta = 0.5\n[criterion]\ngamma = 0.2\nq = 1.4\nflag_points = 10000\n");
    let bad = failed_checks(&r);
    outcome(
        bad.is_empty() && !r.analysis.checks.is_empty(),
        format!(
            "flag mismatches {}, inconclusive {}, |G closed - partial| {:.1e}; failing: {bad:?}",
            derived(&r, "flag_mismatches"),
            derived(&r, "flag_inconclusive"),
            (derived(&r, "g_closed") - derived(&r, "g_partial")).abs()
        ),
    )
}

fn brownian_path(seed: u64, n: usize) -> Vec<f64> {
    let mut s = RngStream::new(seed, 0);
    let dx = 1.0 / n as f64;
    let mut b = 0.0;
    (0..n)
        .map(|_| {
            let (u, v) = (s.next_open01(), s.next_f64());
            b += dx.sqrt() * (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
            b
        })
        .collect()
}

fn regularity() -> Outcome {
    let lin: Vec<f64> = (0..1024).map(|i| i as f64 / 1023.0).collect();
    let e_lin = holder_exponent(&lin, 1.0 / 1023.0, 0..=8).unwrap().exponent;
    let cusp: Vec<f64> = (0..=1024).map(|i| (i as f64 / 1024.0 - 0.5).abs().sqrt()).collect();
    let e_cusp = holder_exponent(&cusp, 1.0 / 1024.0, 0..=8).unwrap().exponent;
    let e_bm = holder_exponent(&brownian_path(12, 4096), 1.0 / 4096.0, 0..=9).unwrap().exponent;
    let synthetic = (e_lin - 1.0).abs() <= 0.05 && (e_cusp - 0.5).abs() <= 0.07 && (e_bm - 0.5).abs() <= 0.1;

    let h = run(&format!("kind = holder\n{DESK}"));
    let rows: Vec<&Vec<f64>> = h.replicas.iter().filter(|r| !r.censored).map(|r| &r.values).collect();
    let soft = rows.iter().filter(|v| v[0] >= 0.15 && v[3] == 1.0).count() as f64 / rows.len() as f64;

    let d2 = run("kind = unbounded2d\nbeta = 0.5\nN = 4000\nt_end = 0.5\nreplicas = 100\nseed = 6\n");
    let d1 = run("kind = unbounded2d\nbeta = 0.5\nN = 4000\nt_end = 0.5\nreplicas = 100\nseed = 6\ndim = 1\n");
    let probe = failed_checks(&d2).is_empty() && failed_checks(&d1).is_empty();
    outcome(
        synthetic && probe,
        format!(
            "synthetic exponents {e_lin:.3}/{e_cusp:.3}/{e_bm:.3}; Ĥ band covers 1/3 with exponent ≥ 0.15 on {:.1}% of replicas (soft, target 80%); max-density ratio d=2 {:.2} (increasing {}), d=1 {:.2}",
            100.0 * soft,
            derived(&d2, "fine_to_coarse_ratio"),
            derived(&d2, "strictly_increasing") == 1.0,
            derived(&d1, "fine_to_coarse_ratio")
        ),
    )
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

fn engineering(first_tanaka: &RunReport) -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = first_tanaka.config.clone();
    cfg.out_dir = a.path().to_path_buf();
    let mut first = first_tanaka.clone();
    first.config.out_dir = a.path().to_path_buf();
    write_artifacts(first).unwrap();
    cfg.out_dir = b.path().to_path_buf();
    write_artifacts(compute_report(&cfg).unwrap()).unwrap();
    let bitwise = numeric_files(a.path()) == numeric_files(b.path());

    let whole = compute_report(&cfg).unwrap();
    let mut halves = Vec::new();
    for (first, w) in [(0u64, 1usize), (200, workers().max(4))] {
        let mut c = cfg.clone();
        c.first_replica = first;
        c.replicas = 200;
        c.workers = w;
        halves.push(compute_report(&c).unwrap());
    }
    let merged = merge_loaded(halves).unwrap();
    let invariant = merged.analysis == whole.analysis;

    let base = "kind = simulate\nN = 100\nt_end = 0.1\n";
    let beta_errors = ["0", "1", "1.5", "-0.2"]
        .iter()
        .filter(|b| parse_config(&format!("{base}beta = {b}\n"), Path::new("."), None).is_err())
        .count();
    let dt_error = parse_config(&format!("{base}beta = 0.5\ndt = 0.01\n"), Path::new("."), None).is_err();
    outcome(
        bitwise && invariant && beta_errors == 4 && dt_error,
        format!("bitwise rerun {bitwise}, merged worker invariance {invariant}, β rejections {beta_errors}/4, dt-cap rejection {dt_error}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut timed = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {n:>2} {name:<22} {} ({secs:.1}s) {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o, secs));
    };
    timed(1, "green_oracle", &mut green_oracle);
    timed(2, "lipschitz", &mut lipschitz);
    timed(3, "offspring_law", &mut offspring);
    timed(4, "duality", &mut duality);
    timed(5, "mean_formulas", &mut mean_formulas);
    timed(6, "jump_compensator", &mut jump_compensator);
    let mut tanaka_runs = Vec::new();
    timed(7, "tanaka_consistency", &mut || {
        tanaka_runs = [1000u64, 2000, 4000].iter().map(|&n| (n, run(&tanaka_text(n, 3)))).collect();
        tanaka(&tanaka_runs)
    });
    timed(8, "moment_scaling", &mut moments);
    timed(9, "time_change", &mut time_change);
    timed(10, "stable_tails", &mut stable_tails);
    timed(11, "criterion_series", &mut criterion_series);
    timed(12, "regularity", &mut regularity);
    let first = tanaka_runs[0].1.clone();
    timed(13, "engineering", &mut || engineering(&first));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!("summary: {} passed, {} failed {:?}", results.len() - failed.len(), failed.len(), failed);
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

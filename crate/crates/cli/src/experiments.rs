//! Per-kind replica functions and the analysis run on their summaries.

use std::sync::Arc;

use sbmlab_core::continuity_lab::{gs_series, holder_exponent, q_a, q_b, q_c, unboundedness_probe, Convergence, CriterionParams};
use sbmlab_core::kernels_green::{measure_semigroup, occupation_mean, FiniteMeasure};
use sbmlab_core::localtime_tanaka::{estimate_local_time, ftc_residual, martingale_increments, moment_table, tanaka_panel};
use sbmlab_core::loglaplace_solver::{default_grid, duality_report, solve_mild, SolverConfig};
use sbmlab_core::particle_sbm::{
    simulate, GaussianPanel, GreenPanel, IntervalIndicator, Mass, ModelParams, OccupationGrid, PathRecorder, PsiPower,
    ScalarFn, SharedObservable,
};
use sbmlab_core::rng_stable::RngStream;
use sbmlab_core::stable_path::{
    calibrate_smalljump, compute_t, inf_tail_fit, interval_occupation, simulate_stable_path, smalljump_bound,
    smalljump_violations, time_change_from_samples,
};
use sbmlab_core::stats::{fit_line, Moments};
use sbmlab_core::LabError;

use crate::config::{smooth_indicator, ExperimentConfig, KindParams, TestFn};
use crate::report::{column_stats, Analysis, ReplicaSummary, Table};

/// Everything a replica needs, built once per run.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub mu: FiniteMeasure,
    pub params: ModelParams,
    pub observables: Vec<SharedObservable>,
    pub columns: Vec<String>,
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn duality_phi(cfg: &ExperimentConfig) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    let KindParams::Duality {
        phi_lo,
        phi_hi,
        phi_edge,
        phi_height,
        ..
    } = cfg.params
    else {
        unreachable!()
    };
    move |x| phi_height * smooth_indicator(phi_lo, phi_hi, phi_edge, x)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, LabError> {
    let mu = cfg.initial();
    let params = cfg.model.params();
    let mut obs: Vec<SharedObservable> = Vec::new();
    let mut columns = Vec::new();
    match &cfg.params {
        KindParams::Simulate { functions, times } => {
            for &tf in functions {
                obs.push(Arc::new(ScalarFn::new(tf.name(), move |x| tf.eval(x))));
            }
            for &t in times {
                for tf in functions {
                    columns.push(format!("x[{}]({})", tf.name(), f(t)));
                    columns.push(format!("y[{}]({})", tf.name(), f(t)));
                }
            }
            obs.push(Arc::new(Mass));
            columns.extend(["mass_end".into(), "extinct".into(), "events".into()]);
        }
        KindParams::Duality { .. } => {
            obs.push(Arc::new(ScalarFn::new("phi", duality_phi(cfg))));
            columns.push("x_t_phi".into());
        }
        KindParams::Tanaka {
            lambdas,
            xs,
            panel,
            bandwidth,
        } => {
            obs.push(Arc::new(GreenPanel::new(panel.panel(), lambdas.clone())?));
            obs.push(Arc::new(GaussianPanel::new(panel.panel(), *bandwidth)?));
            for &l in lambdas {
                for &x in xs {
                    columns.push(format!("l_tanaka[{};{}]", f(l), f(x)));
                    columns.push(format!("h[{};{}]", f(l), f(x)));
                    columns.push(format!("w[{};{}]", f(l), f(x)));
                }
            }
            for &x in xs {
                columns.push(format!("l_kernel[{}]", f(x)));
            }
        }
        KindParams::Moments { distances, .. } => {
            for &d in distances {
                columns.push(format!("delta[{}]", f(d)));
            }
        }
        KindParams::Jumps { ys, .. } => {
            for &y in ys {
                columns.push(format!("count[{}]", f(y)));
            }
        }
        KindParams::Timechange { lambda, x1, x2, .. } => {
            obs.push(Arc::new(PsiPower::new(*lambda, *x1, *x2, cfg.model.beta)?));
            obs.push(Arc::new(IntervalIndicator { x1: *x1, x2: *x2 }));
            columns.extend(["z_hat".into(), "t_hat".into(), "interval_occupation".into()]);
        }
        KindParams::Stabletails {
            inf_x,
            calibration,
            holdout,
            ..
        } => {
            for &x in inf_x {
                columns.push(format!("inf_below[{}]", f(x)));
            }
            for &(x, y) in calibration {
                columns.push(format!("cal[{}:{}]", f(x), f(y)));
            }
            for &(x, y) in holdout {
                columns.push(format!("hold[{}:{}]", f(x), f(y)));
            }
        }
        KindParams::Criterion { .. } => {}
        KindParams::Holder { lambda, panel, .. } => {
            obs.push(Arc::new(GreenPanel::new(panel.panel(), vec![*lambda])?));
            columns.extend(["exponent".into(), "band_lo".into(), "band_hi".into(), "covers_target".into()]);
        }
        KindParams::Unbounded2d {
            window_lo,
            window_hi,
            fine_bins,
            widths,
        } => {
            let fine = (window_hi - window_lo) / *fine_bins as f64;
            obs.push(Arc::new(OccupationGrid::new(cfg.model.dim, *window_lo, fine, *fine_bins)?));
            for &w in widths {
                columns.push(format!("max_density[{}]", f(w)));
            }
        }
    }
    Ok(Prepared {
        cfg: cfg.clone(),
        mu,
        params,
        observables: obs,
        columns,
    })
}

impl Prepared {
    /// Whether replicas are run at all (the criterion kind is deterministic).
    pub fn has_replicas(&self) -> bool {
        !self.columns.is_empty()
    }

    fn simulate(&self, index: u64) -> Result<PathRecorder, LabError> {
        simulate(&self.mu, &self.params, &self.observables, &mut RngStream::new(self.cfg.seed, index))
    }

    /// Summary values of replica `index`; stream (seed, index).
    pub fn run_replica(&self, index: u64) -> Result<Vec<f64>, LabError> {
        let t = self.cfg.model.t_end;
        let beta = self.cfg.model.beta;
        match &self.cfg.params {
            KindParams::Simulate { functions, times } => {
                let rec = self.simulate(index)?;
                let mut v = Vec::with_capacity(self.columns.len());
                for &s in times {
                    for o in 0..functions.len() {
                        v.push(rec.instant(o, s)?[0]);
                        v.push(rec.occupation(o, s)?[0]);
                    }
                }
                v.push(rec.instant(functions.len(), t)?[0]);
                v.push(if rec.extinction_time().is_some() { 1.0 } else { 0.0 });
                v.push(rec.events().len() as f64);
                Ok(v)
            }
            KindParams::Duality { .. } => Ok(vec![self.simulate(index)?.instant(0, t)?[0]]),
            KindParams::Tanaka { lambdas, xs, panel, bandwidth } => {
                let rec = self.simulate(index)?;
                let pl = panel.panel();
                let mut v = Vec::with_capacity(self.columns.len());
                for &l in lambdas {
                    let terms = tanaka_panel(&rec, &self.mu, l, t)?;
                    for &x in xs {
                        let j = pl.index_of(x).expect("validated panel point");
                        v.push(terms[j].local_time);
                        v.push(terms[j].h);
                        v.push(ftc_residual(&pl, &terms, x)?);
                    }
                }
                v.extend(estimate_local_time(&rec, t, xs, *bandwidth)?.values);
                Ok(v)
            }
            KindParams::Moments { lambda, x0, distances, .. } => {
                let rec = self.simulate(index)?;
                let pairs: Vec<(f64, f64)> = distances.iter().map(|&d| (*x0, x0 + d)).collect();
                Ok(martingale_increments(&rec, *lambda, t, &pairs)?.iter().map(|s| s.delta).collect())
            }
            KindParams::Jumps { ys, .. } => {
                let rec = self.simulate(index)?;
                let n = rec.params().n_scale;
                let sizes: Vec<f64> = rec.events().iter().map(|e| e.net_mass(n)).collect();
                Ok(ys.iter().map(|&y| sizes.iter().filter(|&&s| s > y).count() as f64).collect())
            }
            KindParams::Timechange { lambda, x1, x2, .. } => {
                let rec = self.simulate(index)?;
                let z = martingale_increments(&rec, *lambda, t, &[(*x1, *x2)])?[0].inside;
                Ok(vec![z, compute_t(&rec, *lambda, *x1, *x2, t)?, interval_occupation(&rec, *x1, *x2, t)?])
            }
            KindParams::Stabletails {
                inf_x,
                steps,
                calibration,
                holdout,
                ..
            } => {
                let path = simulate_stable_path(&mut RngStream::new(self.cfg.seed, index), beta, t, t / *steps as f64)?;
                let (lo, hi, jump) = (path.running_min(), path.running_max(), path.max_jump_proxy());
                let ind = |b: bool| if b { 1.0 } else { 0.0 };
                let mut v: Vec<f64> = inf_x.iter().map(|&x| ind(lo < -x)).collect();
                v.extend(calibration.iter().chain(holdout).map(|&(x, y)| ind(hi >= x && jump <= y)));
                Ok(v)
            }
            KindParams::Criterion { .. } => Ok(Vec::new()),
            KindParams::Holder {
                lambda,
                panel,
                level_lo,
                level_hi,
                ..
            } => {
                let rec = self.simulate(index)?;
                let h: Vec<f64> = tanaka_panel(&rec, &self.mu, *lambda, t)?.iter().map(|d| d.h).collect();
                let target = beta / (1.0 + beta);
                // A degenerate field (e.g. no mass near the panel) has no exponent.
                match holder_exponent(&h, panel.panel().spacing(), *level_lo..=*level_hi) {
                    Ok(e) => Ok(vec![e.exponent, e.band.0, e.band.1, if e.contains(target) { 1.0 } else { 0.0 }]),
                    Err(LabError::Numeric { .. }) => Ok(vec![f64::NAN; 4]),
                    Err(e) => Err(e),
                }
            }
            KindParams::Unbounded2d { widths, .. } => {
                let rec = self.simulate(index)?;
                match unboundedness_probe(&rec, widths, t) {
                    Ok(rows) => Ok(rows.iter().map(|r| r.max_density).collect()),
                    // Nothing reached the window on this replica.
                    Err(LabError::Domain(_)) => Ok(vec![f64::NAN; widths.len()]),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Replica summary; resource-cap failures become censored entries.
    pub fn summarize(&self, index: u64) -> Result<ReplicaSummary, LabError> {
        match self.run_replica(index) {
            Ok(values) => Ok(ReplicaSummary {
                index,
                censored: false,
                note: None,
                values,
            }),
            Err(LabError::Resource(msg)) => Ok(ReplicaSummary {
                index,
                censored: true,
                note: Some(msg),
                values: Vec::new(),
            }),
            Err(e) => Err(e),
        }
    }

    /// Statistics, derived quantities, checks and tables from the summaries
    /// (which must be sorted by replica index).
    pub fn analyze(&self, replicas: &[ReplicaSummary]) -> Result<Analysis, LabError> {
        let mut a = Analysis {
            stats: column_stats(&self.columns, replicas),
            ..Analysis::default()
        };
        let live: Vec<&ReplicaSummary> = replicas.iter().filter(|r| !r.censored).collect();
        let col = |j: usize| -> Vec<f64> { live.iter().map(|r| r.values[j]).filter(|v| v.is_finite()).collect() };
        let t = self.cfg.model.t_end;
        let beta = self.cfg.model.beta;
        match &self.cfg.params {
            KindParams::Simulate { functions, times } => self.analyze_simulate(&mut a, functions, times)?,
            KindParams::Duality { solver_dx, solver_dt, phi_lo, phi_hi, phi_edge, .. } => {
                let phi = duality_phi(&self.cfg);
                let rhs_exponent = if t == 0.0 {
                    self.mu.apply(&phi)
                } else {
                    let (lo, hi) = measure_span(&self.mu, (phi_lo - phi_edge, phi_hi + phi_edge));
                    let grid = default_grid((lo, hi), t, *solver_dx)?;
                    let steps = ((t / solver_dt).ceil() as usize).max(1);
                    let sol = solve_mild(&grid.sample(&phi), &grid, &SolverConfig::new(beta, t, steps))?;
                    a.derive("solver_residual", sol.residual);
                    sol.apply_measure(&self.mu)
                };
                let samples = col(0);
                if !samples.is_empty() {
                    let d = duality_report(&samples, rhs_exponent);
                    a.derive("lhs", d.lhs);
                    a.derive("rhs", d.rhs);
                    a.derive("se", d.se);
                    a.derive("z", d.z_score);
                    a.check("duality_z_le_3", d.z_score <= 3.0, format!("|lhs - rhs|/se = {:.3}", d.z_score));
                }
            }
            KindParams::Tanaka { lambdas, xs, .. } => {
                let nx = xs.len();
                let kernel0 = 3 * lambdas.len() * nx;
                let mut rows = Vec::new();
                for (li, &l) in lambdas.iter().enumerate() {
                    for (xi, &x) in xs.iter().enumerate() {
                        let base = 3 * (li * nx + xi);
                        let lt = col(base);
                        let w: Vec<f64> = col(base + 2).iter().map(|v| v.abs()).collect();
                        let lk = col(kernel0 + xi);
                        let (mt, mw, mk) = (Moments::from_slice(&lt), Moments::from_slice(&w), Moments::from_slice(&lk));
                        let gap = paired(&live, kernel0 + xi, base);
                        a.derive(format!("abs_w[{};{}]", f(l), f(x)), mw.mean());
                        a.derive(format!("kernel_gap[{};{}]", f(l), f(x)), (mk.mean() - mt.mean()).abs());
                        rows.push(vec![l, x, mt.mean(), mt.se(), mk.mean(), mk.se(), mw.mean(), mw.se(), gap.mean(), gap.se()]);
                    }
                }
                // The local time does not depend on λ.
                for w in lambdas.windows(2) {
                    let (la, lb) = (lambdas.iter().position(|&v| v == w[0]).unwrap(), lambdas.iter().position(|&v| v == w[1]).unwrap());
                    for (xi, &x) in xs.iter().enumerate() {
                        let d = paired(&live, 3 * (la * nx + xi), 3 * (lb * nx + xi));
                        let z = if d.mean() == 0.0 { 0.0 } else { d.mean().abs() / d.se() };
                        a.derive(format!("lambda_z[{},{};{}]", f(w[0]), f(w[1]), f(x)), z);
                        a.check(
                            format!("lambda_robust[{},{};{}]", f(w[0]), f(w[1]), f(x)),
                            z <= 3.0,
                            format!("paired z = {z:.3}"),
                        );
                    }
                }
                a.tables.push(Table {
                    name: "tanaka".into(),
                    columns: ["lambda", "x", "l_tanaka", "l_tanaka_se", "l_kernel", "l_kernel_se", "abs_w", "abs_w_se", "kernel_minus_tanaka", "kernel_minus_tanaka_se"]
                        .map(String::from)
                        .to_vec(),
                    rows,
                });
            }
            KindParams::Moments { q, distances, min_slope, .. } => {
                let inc: Vec<Vec<f64>> = live
                    .iter()
                    .filter(|r| r.values.iter().all(|v| v.is_finite()))
                    .map(|r| r.values.clone())
                    .collect();
                if !inc.is_empty() {
                    let table = moment_table(&inc, distances, *q, beta)?;
                    a.tables.push(Table {
                        name: "moments".into(),
                        columns: ["distance", "moment", "se"].map(String::from).to_vec(),
                        rows: table.rows.iter().map(|r| vec![r.distance, r.moment, r.se]).collect(),
                    });
                    let slope = table.fit.map(|f| f.slope).unwrap_or(f64::NAN);
                    a.derive("slope", slope);
                    a.derive("slope_se", table.fit.map(|f| f.slope_se).unwrap_or(f64::NAN));
                    a.check("moment_slope", slope >= *min_slope, format!("slope {slope:.4} vs minimum {min_slope}"));
                }
            }
            KindParams::Jumps { ys, slope_tol } => {
                let c = self.params.c_beta() * t * self.mu.total_mass() / (1.0 + beta);
                let mut rows = Vec::new();
                let (mut lx, mut ly) = (Vec::new(), Vec::new());
                for (j, &y) in ys.iter().enumerate() {
                    let m = Moments::from_slice(&col(j));
                    let expect = c * y.powf(-1.0 - beta);
                    let z = (m.mean() - expect).abs() / m.se();
                    a.check(format!("jump_count_z[{}]", f(y)), z <= 3.0, format!("mean {:.4} ± {:.4} vs {expect:.4}", m.mean(), m.se()));
                    if m.mean() > 0.0 {
                        lx.push(y.ln());
                        ly.push(m.mean().ln());
                    }
                    rows.push(vec![y, m.mean(), m.se(), expect, z]);
                }
                a.tables.push(Table {
                    name: "jumps".into(),
                    columns: ["y", "mean_count", "se", "expected", "z"].map(String::from).to_vec(),
                    rows,
                });
                let slope = fit_line(&lx, &ly).map(|f| f.slope).unwrap_or(f64::NAN);
                a.derive("slope", slope);
                a.check(
                    "jump_slope",
                    (slope + 1.0 + beta).abs() <= *slope_tol,
                    format!("slope {slope:.4} vs {:.4} ± {slope_tol}", -1.0 - beta),
                );
            }
            KindParams::Timechange { lambda, x1, x2, thetas } => {
                let rows: Vec<&ReplicaSummary> = live.iter().copied().filter(|r| r.values.iter().all(|v| v.is_finite())).collect();
                let z: Vec<f64> = rows.iter().map(|r| r.values[0]).collect();
                let th: Vec<f64> = rows.iter().map(|r| r.values[1]).collect();
                let bound = 2f64.powf(1.0 + beta);
                let violations = rows.iter().filter(|r| r.values[1] > bound * r.values[2] * (1.0 + 1e-12)).count();
                a.derive("bound_violations", violations as f64);
                a.check("t_hat_bound", violations == 0, format!("{violations} replica(s) with T̂ > 2^(1+β)·∫L̂"));
                if !z.is_empty() {
                    let rep = time_change_from_samples(beta, *lambda, (*x1, *x2), t, &z, &th, thetas)?;
                    a.derive("max_z", rep.max_abs_z());
                    a.check("laplace_z_le_3", rep.max_abs_z() <= 3.0, format!("max |z| = {:.3}", rep.max_abs_z()));
                    a.tables.push(Table {
                        name: "laplace".into(),
                        columns: ["theta", "lhs", "rhs", "se_lhs", "se_rhs", "z", "martingale_mean", "martingale_se", "fitted_scale"]
                            .map(String::from)
                            .to_vec(),
                        rows: rep
                            .curve
                            .iter()
                            .map(|p| vec![p.theta, p.lhs, p.rhs, p.se_lhs, p.se_rhs, p.z_score, p.martingale_mean, p.martingale_se, p.fitted_scale])
                            .collect(),
                    });
                }
            }
            KindParams::Stabletails {
                inf_x,
                min_hits,
                slope_tol,
                calibration,
                holdout,
                ..
            } => {
                let n = live.len();
                let ps: Vec<f64> = (0..self.columns.len()).map(|j| Moments::from_slice(&col(j)).mean()).collect();
                let (pi, rest) = ps.split_at(inf_x.len());
                let (pc, ph) = rest.split_at(calibration.len());
                let fit = inf_tail_fit(inf_x, pi, n, *min_hits);
                let target = (1.0 + beta) / beta;
                let slope = fit.map(|f| f.slope).unwrap_or(f64::NAN);
                a.derive("inf_slope", slope);
                a.derive("inf_slope_target", target);
                a.check("inf_tail_slope", (slope - target).abs() <= *slope_tol, format!("slope {slope:.4} vs {target:.4} ± {slope_tol}"));
                let c = calibrate_smalljump(beta, t, calibration, pc);
                let viol = smalljump_violations(c, beta, t, holdout, ph);
                a.derive("calibrated_c", c);
                a.derive("holdout_violations", viol as f64);
                a.check("smalljump_holdout", viol == 0, format!("{viol} violation(s) with C = {c:.4}"));
                a.tables.push(Table {
                    name: "inf_tail".into(),
                    columns: ["x", "p", "se"].map(String::from).to_vec(),
                    rows: inf_x.iter().zip(pi).map(|(&x, &p)| vec![x, p, binom_se(p, n)]).collect(),
                });
                a.tables.push(Table {
                    name: "smalljump".into(),
                    columns: ["x", "y", "p", "bound", "holdout"].map(String::from).to_vec(),
                    rows: calibration
                        .iter()
                        .zip(pc)
                        .map(|(&(x, y), &p)| vec![x, y, p, smalljump_bound(c, beta, t, x, y), 0.0])
                        .chain(holdout.iter().zip(ph).map(|(&(x, y), &p)| vec![x, y, p, smalljump_bound(c, beta, t, x, y), 1.0]))
                        .collect(),
                });
            }
            KindParams::Criterion {
                gamma,
                q,
                k,
                r,
                c,
                n_max,
                r_grid,
                flag_points,
            } => {
                let p = CriterionParams {
                    beta,
                    gamma: *gamma,
                    q: *q,
                    k: *k,
                    r: *r,
                    c_free: *c,
                    n_max: *n_max,
                };
                let rep = gs_series(&p, r_grid)?;
                a.derive("g_closed", rep.g_closed);
                a.derive("g_partial", rep.g_partial);
                a.derive("q_a", rep.q_a.value);
                a.derive("q_b", rep.q_b.value);
                a.derive("q_c", rep.q_c.value);
                let gdiff = (rep.g_closed - rep.g_partial).abs();
                a.check("g_closed_vs_partial", gdiff < 1e-10, format!("difference {gdiff:.3e}"));
                let last = rep.q0_trend.last().map(|v| v.1).unwrap_or(f64::NAN);
                a.check(
                    "q0_decreasing",
                    rep.q0_strictly_decreasing && last < 1e-3,
                    format!("strictly decreasing: {}, final Q(0,r) = {last:.3e}", rep.q0_strictly_decreasing),
                );
                let (mismatches, inconclusive) = flag_grid(self.cfg.seed, *flag_points, *n_max);
                a.derive("flag_mismatches", mismatches as f64);
                a.derive("flag_inconclusive", inconclusive as f64);
                a.check(
                    "flags_match_sign_conditions",
                    mismatches + inconclusive == 0,
                    format!("{mismatches} mismatch(es), {inconclusive} inconclusive over {flag_points} points"),
                );
                a.tables.push(Table {
                    name: "q0".into(),
                    columns: ["r", "q0"].map(String::from).to_vec(),
                    rows: rep.q0_trend.iter().map(|&(r, v)| vec![r, v]).collect(),
                });
                a.texts.push(("series.txt".into(), rep.to_text()));
            }
            KindParams::Holder { min_fraction, .. } => {
                let cov = col(3);
                let frac = Moments::from_slice(&cov).mean();
                a.derive("target", beta / (1.0 + beta));
                a.derive("fraction_covering", frac);
                a.derive("fraction_above_0.15", col(0).iter().filter(|&&e| e >= 0.15).count() as f64 / cov.len().max(1) as f64);
                a.check("holder_band_coverage", frac >= *min_fraction, format!("{frac:.3} of replicas cover β/(1+β)"));
                a.tables.push(Table {
                    name: "holder".into(),
                    columns: ["replica", "exponent", "band_lo", "band_hi"].map(String::from).to_vec(),
                    rows: live.iter().map(|r| vec![r.index as f64, r.values[0], r.values[1], r.values[2]]).collect(),
                });
            }
            KindParams::Unbounded2d { widths, .. } => {
                let means: Vec<Moments> = (0..widths.len()).map(|j| Moments::from_slice(&col(j))).collect();
                // Widths in the order given; the trend is read from coarse to fine.
                let mut order: Vec<usize> = (0..widths.len()).collect();
                order.sort_by(|&i, &j| widths[j].total_cmp(&widths[i]));
                let seq: Vec<f64> = order.iter().map(|&i| means[i].mean()).collect();
                let ratio = seq.last().unwrap_or(&f64::NAN) / seq.first().unwrap_or(&f64::NAN);
                let increasing = seq.windows(2).all(|w| w[1] > w[0]);
                a.derive("fine_to_coarse_ratio", ratio);
                a.derive("strictly_increasing", if increasing { 1.0 } else { 0.0 });
                if self.cfg.model.dim == 2 {
                    a.check("density_diverges", increasing && ratio > 3.0, format!("ratio {ratio:.3}, increasing {increasing}"));
                } else {
                    a.check("density_stabilizes", ratio < 3.0, format!("ratio {ratio:.3}"));
                }
                a.tables.push(Table {
                    name: "probe".into(),
                    columns: ["width", "max_density", "se"].map(String::from).to_vec(),
                    rows: order.iter().map(|&i| vec![widths[i], means[i].mean(), means[i].se()]).collect(),
                });
            }
        }
        Ok(a)
    }

    fn analyze_simulate(&self, a: &mut Analysis, functions: &[TestFn], times: &[f64]) -> Result<(), LabError> {
        for (fi, tf) in functions.iter().enumerate() {
            let mut rows = Vec::new();
            for (ti, &s) in times.iter().enumerate() {
                let kinks = tf.kinks();
                let ox = measure_semigroup(&self.mu, s, |x| tf.eval(x), &kinks)?;
                let oy = occupation_mean(&self.mu, s, |x| tf.eval(x), &kinks)?;
                let base = 2 * (ti * functions.len() + fi);
                let (sx, sy) = (&a.stats[base], &a.stats[base + 1]);
                let zx = z_of(sx.mean, sx.se, ox);
                let zy = z_of(sy.mean, sy.se, oy);
                rows.push(vec![s, sx.mean, sx.se, ox, zx, sy.mean, sy.se, oy, zy]);
                let name = format!("{}({})", tf.name(), f(s));
                a.checks.push(crate::report::Check {
                    name: format!("mean_x[{name}]"),
                    passed: zx <= 3.0,
                    detail: format!("{:.5} ± {:.5} vs {ox:.5}", sx.mean, sx.se),
                });
                a.checks.push(crate::report::Check {
                    name: format!("mean_y[{name}]"),
                    passed: zy <= 3.0,
                    detail: format!("{:.5} ± {:.5} vs {oy:.5}", sy.mean, sy.se),
                });
            }
            a.tables.push(Table {
                name: format!("means_{}", tf.name()),
                columns: ["t", "x_mean", "x_se", "x_oracle", "x_z", "y_mean", "y_se", "y_oracle", "y_z"].map(String::from).to_vec(),
                rows,
            });
        }
        Ok(())
    }
}

fn z_of(mean: f64, se: f64, oracle: f64) -> f64 {
    let d = (mean - oracle).abs();
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

fn binom_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n.max(1) as f64).sqrt()
}

// Moments of values[a] - values[b] over replicas where both are finite.
fn paired(live: &[&ReplicaSummary], a: usize, b: usize) -> Moments {
    let mut m = Moments::new();
    for r in live {
        let d = r.values[a] - r.values[b];
        if d.is_finite() {
            m.push(d);
        }
    }
    m
}

fn measure_span(mu: &FiniteMeasure, (lo, hi): (f64, f64)) -> (f64, f64) {
    let xs = mu.atoms().iter().map(|a| a.0).chain(mu.density().iter().map(|d| d.0));
    xs.fold((lo, hi), |(l, h), x| (l.min(x), h.max(x)))
}

// Convergence flags against the exponent signs 1 - q(1-γ) < 0,
// 1/β - γ(1+1/β) > 0 and 1/(1+β) - γ > 0 on random (β, γ, q).
fn flag_grid(seed: u64, points: usize, n_max: usize) -> (usize, usize) {
    let mut s = RngStream::new(seed, 0);
    let (mut mismatches, mut inconclusive) = (0, 0);
    for _ in 0..points {
        let beta = 0.02 + 0.96 * s.next_open01();
        let gamma = 0.01 + 0.98 * s.next_open01();
        let q = 1.0 + s.next_open01();
        let p = CriterionParams {
            n_max,
            ..CriterionParams::new(beta, gamma, q)
        };
        let signs = [p.e_a() < 0.0, p.s_b() > 0.0, p.s_c() > 0.0];
        for (v, conv) in [q_a(&p), q_b(&p), q_c(&p)].iter().zip(signs) {
            match v.flag {
                Convergence::Inconclusive => inconclusive += 1,
                Convergence::Convergent if conv => {}
                Convergence::Divergent if !conv => {}
                _ => mismatches += 1,
            }
        }
    }
    (mismatches, inconclusive)
}

//! Local-time estimators and the Tanaka decomposition of a simulated path.
//!
//! For a fixed λ and x the particle estimator of the recentered local time is
//!
//!   Ẑ(t,x) = -⟨X_t, G^x⟩ + λ ∫_0^t ⟨X_s, G^x⟩ ds + M̂_t(G^x),
//!
//! with G^x(y) = G_λ(y - x) and M̂ the branching event sum. L̂ = ⟨X_0, G^x⟩ + Ẑ.
//! Ĥ is the same expression with the x-derivative y ↦ g_λ(x - y) of G^x.
//! Functionals on a [`GreenPanel`] registered before simulation use the full
//! step grid; anything else falls back to trapezoids over stored snapshot
//! positions, which are only as fine as the snapshot spacing.

use crate::error::{domain, usage, Result};
use crate::kernels_green::{g_lambda, green_closed, FiniteMeasure};
use crate::particle_sbm::{psi0, GaussianPanel, GreenPanel, PathRecorder, UniformPanel};
use crate::stats::{fit_line, LineFit, Moments};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimeEstimate {
    pub t: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub n_scale: u64,
    /// Bandwidth below the x-grid spacing.
    pub under_resolved: bool,
}

impl LocalTimeEstimate {
    /// Trapezoid of L̂ over the x-grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.xs, &self.values)
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn gauss(bw: f64, d: f64) -> f64 {
    (-0.5 * (d / bw).powi(2)).exp() / (bw * (2.0 * std::f64::consts::PI).sqrt())
}

/// Stored snapshots with positions up to `t` (which must be a snapshot time).
fn snapshot_positions(rec: &PathRecorder, t: f64) -> Result<Vec<(f64, &[f64])>> {
    let last = rec.snapshot_index(t)?;
    let snaps = &rec.snapshots()[..=last];
    if snaps.iter().any(|s| s.positions.is_none()) || rec.params().dim != 1 {
        return usage("functional not registered and no one-dimensional snapshot positions to fall back on");
    }
    Ok(snaps.iter().map(|s| (s.time, s.positions.as_deref().unwrap())).collect())
}

/// ⟨X_t, f⟩ and the snapshot-trapezoid of ∫_0^t ⟨X_s, f⟩ ds.
fn snapshot_functional<F: Fn(f64) -> f64>(rec: &PathRecorder, t: f64, f: F) -> Result<(f64, f64)> {
    let snaps = snapshot_positions(rec, t)?;
    let w = 1.0 / rec.params().n_scale as f64;
    let vals: Vec<f64> = snaps.iter().map(|(_, p)| w * p.iter().map(|&y| f(y)).sum::<f64>()).collect();
    let times: Vec<f64> = snaps.iter().map(|s| s.0).collect();
    Ok((*vals.last().unwrap(), trapezoid(&times, &vals)))
}

/// Kernel-smoothed occupation density ∫_0^t ⟨X_s, k_bw(· - x)⟩ ds at each x.
///
/// Uses a registered [`GaussianPanel`] with this bandwidth when every x is
/// one of its points, otherwise snapshot positions.
pub fn estimate_local_time(rec: &PathRecorder, t: f64, xs: &[f64], bandwidth: f64) -> Result<LocalTimeEstimate> {
    if !(bandwidth > 0.0) {
        return domain("bandwidth must be positive");
    }
    if t > rec.horizon() * (1.0 + 1e-12) {
        return domain(format!("t = {t} beyond horizon {}", rec.horizon()));
    }
    let spacing = xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let registered = rec.find_observable::<GaussianPanel>(|g| {
        (g.bandwidth() - bandwidth).abs() <= 1e-12 * bandwidth && xs.iter().all(|&x| g.panel().index_of(x).is_some())
    });
    let values = match registered {
        Some((o, g)) => {
            let occ = rec.occupation(o, t)?;
            xs.iter().map(|&x| occ[g.panel().index_of(x).unwrap()]).collect()
        }
        None => {
            let mut v = Vec::with_capacity(xs.len());
            for &x in xs {
                v.push(snapshot_functional(rec, t, |y| gauss(bandwidth, y - x))?.1);
            }
            v
        }
    };
    Ok(LocalTimeEstimate {
        t,
        xs: xs.to_vec(),
        values,
        bandwidth,
        n_scale: rec.params().n_scale,
        under_resolved: xs.len() > 1 && bandwidth < spacing,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TanakaDecomposition {
    pub t: f64,
    pub x: f64,
    pub lambda: f64,
    pub term_initial: f64,
    pub term_terminal: f64,
    pub term_occupation: f64,
    pub term_martingale: f64,
    pub z: f64,
    pub local_time: f64,
    pub deriv_initial: f64,
    pub deriv_terminal: f64,
    pub deriv_occupation: f64,
    pub deriv_martingale: f64,
    pub h: f64,
}

impl TanakaDecomposition {
    #[allow(clippy::too_many_arguments)]
    fn assemble(t: f64, x: f64, lambda: f64, green: [f64; 4], deriv: [f64; 4]) -> Self {
        let z = -green[1] + green[2] + green[3];
        Self {
            t,
            x,
            lambda,
            term_initial: green[0],
            term_terminal: green[1],
            term_occupation: green[2],
            term_martingale: green[3],
            z,
            local_time: green[0] + z,
            deriv_initial: deriv[0],
            deriv_terminal: deriv[1],
            deriv_occupation: deriv[2],
            deriv_martingale: deriv[3],
            h: -deriv[1] + deriv[2] + deriv[3],
        }
    }
}

/// Tanaka terms at every point of a registered green panel, at once.
pub fn tanaka_panel(rec: &PathRecorder, mu0: &FiniteMeasure, lambda: f64, t: f64) -> Result<Vec<TanakaDecomposition>> {
    let (o, gp) = rec
        .find_observable::<GreenPanel>(|g| g.lambda_index(lambda).is_some())
        .ok_or_else(|| crate::LabError::Usage(format!("no green panel registered for lambda = {lambda}")))?;
    panel_terms(rec, o, gp, mu0, lambda, t)
}

fn panel_terms(
    rec: &PathRecorder,
    o: usize,
    gp: &GreenPanel,
    mu0: &FiniteMeasure,
    lambda: f64,
    t: f64,
) -> Result<Vec<TanakaDecomposition>> {
    let l = gp.lambda_index(lambda).unwrap();
    let p = gp.panel().len();
    let inst = rec.instant(o, t)?;
    let occ = rec.occupation(o, t)?;
    let (g0, d0) = (gp.green_offset(l), gp.derivative_offset(l));
    let ev = rec.events();
    let n_ev = ev.count_until(t);
    let inv_n = 1.0 / rec.params().n_scale as f64;
    let single = GreenPanel::new(gp.panel().clone(), vec![lambda])?;
    let mart = single
        .sums((0..n_ev).map(|i| (ev.locations[i], (ev.offspring[i] as f64 - 1.0) * inv_n)))
        .remove(0);
    Ok((0..p)
        .map(|j| {
            let x = gp.panel().points()[j];
            let init = mu0.apply(|y| green_closed(lambda, y - x));
            let dinit = mu0.apply(|y| g_lambda(lambda, x - y));
            TanakaDecomposition::assemble(
                t,
                x,
                lambda,
                [init, inst[g0 + j], lambda * occ[g0 + j], mart.green(j)],
                [dinit, inst[d0 + j], lambda * occ[d0 + j], mart.derivative(j)],
            )
        })
        .collect())
}

/// M̂_t(f) as an event sum.
fn event_sum<F: Fn(f64) -> f64>(rec: &PathRecorder, t: f64, f: F) -> f64 {
    let ev = rec.events();
    let n = ev.count_until(t);
    let inv_n = 1.0 / rec.params().n_scale as f64;
    (0..n).map(|i| f(ev.locations[i]) * (ev.offspring[i] as f64 - 1.0) * inv_n).sum()
}

/// The Tanaka decomposition at a single (λ, t, x).
pub fn tanaka_terms(rec: &PathRecorder, mu0: &FiniteMeasure, lambda: f64, t: f64, x: f64) -> Result<TanakaDecomposition> {
    if !(lambda > 0.0) {
        return domain("lambda must be positive");
    }
    if let Some((o, gp)) =
        rec.find_observable::<GreenPanel>(|g| g.lambda_index(lambda).is_some() && g.panel().index_of(x).is_some())
    {
        let j = gp.panel().index_of(x).unwrap();
        let l = gp.lambda_index(lambda).unwrap();
        let inst = rec.instant(o, t)?;
        let occ = rec.occupation(o, t)?;
        let (g0, d0) = (gp.green_offset(l) + j, gp.derivative_offset(l) + j);
        let x = gp.panel().points()[j];
        return Ok(TanakaDecomposition::assemble(
            t,
            x,
            lambda,
            [
                mu0.apply(|y| green_closed(lambda, y - x)),
                inst[g0],
                lambda * occ[g0],
                event_sum(rec, t, |y| green_closed(lambda, y - x)),
            ],
            [
                mu0.apply(|y| g_lambda(lambda, x - y)),
                inst[d0],
                lambda * occ[d0],
                event_sum(rec, t, |y| g_lambda(lambda, x - y)),
            ],
        ));
    }
    let (gt, gocc) = snapshot_functional(rec, t, |y| green_closed(lambda, y - x))?;
    let (dt, docc) = snapshot_functional(rec, t, |y| g_lambda(lambda, x - y))?;
    Ok(TanakaDecomposition::assemble(
        t,
        x,
        lambda,
        [
            mu0.apply(|y| green_closed(lambda, y - x)),
            gt,
            lambda * gocc,
            event_sum(rec, t, |y| green_closed(lambda, y - x)),
        ],
        [
            mu0.apply(|y| g_lambda(lambda, x - y)),
            dt,
            lambda * docc,
            event_sum(rec, t, |y| g_lambda(lambda, x - y)),
        ],
    ))
}

/// Ŵ(t,x) = Ẑ(t,x) - Ẑ(t,0) - ∫_0^x Ĥ(t,z) dz, the integral by the trapezoid
/// rule over the panel points between 0 and x.
pub fn ftc_residual(panel: &UniformPanel, terms: &[TanakaDecomposition], x: f64) -> Result<f64> {
    let j0 = panel.index_of(0.0).ok_or_else(|| crate::LabError::Usage("panel must contain 0".into()))?;
    let jx = panel
        .index_of(x)
        .ok_or_else(|| crate::LabError::Usage(format!("panel must contain x = {x}")))?;
    if j0 == jx {
        return Ok(0.0);
    }
    let (a, b) = (j0.min(jx), j0.max(jx));
    let xs: Vec<f64> = (a..=b).map(|j| terms[j].x).collect();
    let hs: Vec<f64> = (a..=b).map(|j| terms[j].h).collect();
    let signed = if jx > j0 { trapezoid(&xs, &hs) } else { -trapezoid(&xs, &hs) };
    Ok(terms[jx].z - terms[j0].z - signed)
}

/// [`ftc_residual`] on the registered green panel for λ.
pub fn ftc_check(rec: &PathRecorder, mu0: &FiniteMeasure, lambda: f64, t: f64, x: f64) -> Result<f64> {
    let (o, gp) = rec
        .find_observable::<GreenPanel>(|g| {
            g.lambda_index(lambda).is_some() && g.panel().index_of(0.0).is_some() && g.panel().index_of(x).is_some()
        })
        .ok_or_else(|| crate::LabError::Usage(format!("no green panel for lambda = {lambda} containing 0 and {x}")))?;
    if gp.panel().index_of(x) == gp.panel().index_of(0.0) {
        return Ok(0.0);
    }
    let terms = panel_terms(rec, o, gp, mu0, lambda, t)?;
    ftc_residual(gp.panel(), &terms, x)
}

/// Martingale increment M̂_t(g^{x1}) - M̂_t(g^{x2}) with g^x(y) = g_λ(y - x),
/// and its split I - Z into the part outside [x1, x2] and Z = M̂_t(ψ0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementSplit {
    pub delta: f64,
    pub outside: f64,
    pub inside: f64,
}

pub fn martingale_increments(rec: &PathRecorder, lambda: f64, t: f64, pairs: &[(f64, f64)]) -> Result<Vec<IncrementSplit>> {
    if !(lambda > 0.0) {
        return domain("lambda must be positive");
    }
    let ev = rec.events();
    if ev.dim() != 1 {
        return usage("martingale increments need a one-dimensional run");
    }
    let n = ev.count_until(t);
    let inv_n = 1.0 / rec.params().n_scale as f64;
    let mut out = vec![
        IncrementSplit {
            delta: 0.0,
            outside: 0.0,
            inside: 0.0
        };
        pairs.len()
    ];
    for i in 0..n {
        let y = ev.locations[i];
        let w = (ev.offspring[i] as f64 - 1.0) * inv_n;
        for (s, &(x1, x2)) in out.iter_mut().zip(pairs) {
            let (lo, hi) = (x1.min(x2), x1.max(x2));
            let d = g_lambda(lambda, y - x1) - g_lambda(lambda, y - x2);
            s.delta += w * d;
            if y >= lo && y <= hi {
                // ψ0 on [lo, hi]; the increment there is ∓ψ0 by orientation.
                let z = psi0(lambda, lo, hi, y);
                s.inside += w * if x1 <= x2 { z } else { -z };
            } else {
                s.outside += w * d;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub distance: f64,
    pub moment: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub q: f64,
    pub rows: Vec<MomentRow>,
    /// Slope of log moment against log distance over rows with positive moment.
    pub fit: Option<LineFit>,
}

/// Reduces per-replica increments (`increments[r][k]` for pair k) into
/// q-th absolute moments and a log-log slope.
pub fn moment_table(increments: &[Vec<f64>], distances: &[f64], q: f64, beta: f64) -> Result<MomentTable> {
    crate::error::check_beta(beta)?;
    if !(q > 1.0 && q < 1.0 + beta) {
        return domain(format!("q = {q} outside (1, 1+β) = (1, {})", 1.0 + beta));
    }
    let rows: Vec<MomentRow> = distances
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let m = Moments::from_slice(&increments.iter().map(|r| r[k].abs().powf(q)).collect::<Vec<_>>());
            MomentRow {
                distance: d,
                moment: m.mean(),
                se: m.se(),
            }
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.moment > 0.0 && r.distance > 0.0)
        .map(|r| (r.distance.ln(), r.moment.ln()))
        .unzip();
    Ok(MomentTable {
        q,
        rows,
        fit: if lx.len() >= 2 { fit_line(&lx, &ly) } else { None },
    })
}

/// Monte Carlo E|M̂_t(g^{x1}) - M̂_t(g^{x2})|^q over an ensemble of runs.
pub fn martingale_increment_moment(
    recorders: &[PathRecorder],
    lambda: f64,
    t: f64,
    q: f64,
    pairs: &[(f64, f64)],
) -> Result<MomentTable> {
    let beta = recorders
        .first()
        .map(|r| r.params().beta)
        .ok_or_else(|| crate::LabError::Usage("empty ensemble".into()))?;
    let mut inc = Vec::with_capacity(recorders.len());
    for r in recorders {
        inc.push(martingale_increments(r, lambda, t, pairs)?.iter().map(|s| s.delta).collect());
    }
    let distances: Vec<f64> = pairs.iter().map(|(a, b)| (a - b).abs()).collect();
    moment_table(&inc, &distances, q, beta)
}

/// sup_{s ≤ t} |M̂_s(f)| over event times.
pub fn martingale_running_sup<F: Fn(f64) -> f64>(rec: &PathRecorder, t: f64, f: F) -> f64 {
    let ev = rec.events();
    let n = ev.count_until(t);
    let inv_n = 1.0 / rec.params().n_scale as f64;
    let mut m = 0.0f64;
    let mut sup = 0.0f64;
    for i in 0..n {
        m += f(ev.locations[i]) * (ev.offspring[i] as f64 - 1.0) * inv_n;
        sup = sup.max(m.abs());
    }
    sup
}

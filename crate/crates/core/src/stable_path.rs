//! Spectrally positive (1+β)-stable paths and the time-change diagnostics.
//!
//! Convention: E[exp(-θ L_t)] = exp(t θ^{1+β}).

use crate::error::{domain, usage, Result};
use crate::particle_sbm::{IntervalIndicator, PathRecorder, PsiPower};
use crate::rng_stable::{RngStream, StableParams, StableSampler};
use crate::stats::{fit_line, LineFit, Moments};

#[derive(Clone, Debug, PartialEq)]
pub struct StablePath {
    pub delta: f64,
    /// L at times 0, δ, 2δ, ...; values[0] = 0.
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
}

impl StablePath {
    pub fn running_min(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::min)
    }

    pub fn running_max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest increment, standing in for the largest jump.
    pub fn max_jump_proxy(&self) -> f64 {
        self.increments.iter().cloned().fold(0.0, f64::max)
    }

    pub fn end(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Cumulative sums of independent increments on a grid of ⌈t_end/δ⌉ equal steps.
pub fn simulate_stable_path(stream: &mut RngStream, beta: f64, t_end: f64, delta: f64) -> Result<StablePath> {
    if !(delta > 0.0) || !(t_end >= 0.0) {
        return domain("need delta > 0 and t_end ≥ 0");
    }
    let sampler = StableSampler::new(StableParams::from_beta(beta)?);
    let n = (t_end / delta - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        return Ok(StablePath {
            delta,
            values: vec![0.0],
            increments: Vec::new(),
        });
    }
    let h = t_end / n as f64;
    let scale = sampler.increment_scale(h);
    let mut values = Vec::with_capacity(n + 1);
    let mut increments = Vec::with_capacity(n);
    let mut l = 0.0;
    values.push(l);
    for _ in 0..n {
        let d = scale * sampler.standard(stream);
        l += d;
        increments.push(d);
        values.push(l);
    }
    Ok(StablePath { delta: h, values, increments })
}

/// Default number of path steps for the tail experiments.
pub const TAIL_STEPS: usize = 1000;

/// Frequencies of {inf_{u ≤ t} L_u < -x} for each x, from one set of paths.
pub fn inf_tail_curve(beta: f64, t: f64, xs: &[f64], replicas: usize, seed: u64) -> Result<Vec<f64>> {
    if xs.iter().any(|&x| !(x > 0.0)) {
        return domain("x must be positive");
    }
    if !(t > 0.0) {
        return domain("t must be positive");
    }
    let mut hits = vec![0usize; xs.len()];
    for r in 0..replicas {
        let p = simulate_stable_path(&mut RngStream::new(seed, r as u64), beta, t, t / TAIL_STEPS as f64)?;
        let m = p.running_min();
        for (h, &x) in hits.iter_mut().zip(xs) {
            if m < -x {
                *h += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / replicas.max(1) as f64).collect())
}

pub fn inf_tail_probability(beta: f64, t: f64, x: f64, replicas: usize, seed: u64) -> Result<f64> {
    Ok(inf_tail_curve(beta, t, &[x], replicas, seed)?[0])
}

/// Regression of log(-log p) on log x over points with at least
/// `min_hits` hits and p < 1.
pub fn inf_tail_fit(xs: &[f64], ps: &[f64], replicas: usize, min_hits: usize) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ps)
        .filter(|(_, &p)| p < 1.0 && p * replicas as f64 >= min_hits as f64)
        .map(|(&x, &p)| (x.ln(), (-p.ln()).ln()))
        .unzip();
    if lx.len() < 2 {
        return None;
    }
    fit_line(&lx, &ly)
}

/// Frequencies of {sup_u L_u ≥ x, every increment ≤ y} for each (x, y).
pub fn sup_smalljump_curve(beta: f64, t: f64, xy: &[(f64, f64)], replicas: usize, seed: u64) -> Result<Vec<f64>> {
    if xy.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return domain("x and y must be positive");
    }
    if !(t > 0.0) {
        return domain("t must be positive");
    }
    let mut hits = vec![0usize; xy.len()];
    for r in 0..replicas {
        let p = simulate_stable_path(&mut RngStream::new(seed, r as u64), beta, t, t / TAIL_STEPS as f64)?;
        let (sup, jump) = (p.running_max(), p.max_jump_proxy());
        for (h, &(x, y)) in hits.iter_mut().zip(xy) {
            if sup >= x && jump <= y {
                *h += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / replicas.max(1) as f64).collect())
}

pub fn sup_smalljump_probability(beta: f64, t: f64, x: f64, y: f64, replicas: usize, seed: u64) -> Result<f64> {
    Ok(sup_smalljump_curve(beta, t, &[(x, y)], replicas, seed)?[0])
}

/// (C t / (x y^β))^{x/y}.
pub fn smalljump_bound(c: f64, beta: f64, t: f64, x: f64, y: f64) -> f64 {
    (c * t / (x * y.powf(beta))).powf(x / y)
}

/// Smallest C for which the bound covers every calibration point:
/// max over points with p > 0 of p^{y/x} · x y^β / t.
pub fn calibrate_smalljump(beta: f64, t: f64, xy: &[(f64, f64)], ps: &[f64]) -> f64 {
    xy.iter()
        .zip(ps)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&(x, y), &p)| p.powf(y / x) * x * y.powf(beta) / t)
        .fold(0.0, f64::max)
}

/// Holdout points where the empirical probability exceeds the bound.
pub fn smalljump_violations(c: f64, beta: f64, t: f64, xy: &[(f64, f64)], ps: &[f64]) -> usize {
    xy.iter()
        .zip(ps)
        .filter(|(&(x, y), &p)| p > smalljump_bound(c, beta, t, x, y))
        .count()
}

/// T̂(t) = ∫_0^t ⟨X_s, ψ0^{1+β}⟩ ds from a registered [`PsiPower`].
pub fn compute_t(rec: &PathRecorder, lambda: f64, x1: f64, x2: f64, t: f64) -> Result<f64> {
    if !(x1 <= x2) {
        return domain("need x1 ≤ x2");
    }
    if x1 == x2 {
        return Ok(0.0);
    }
    let beta = rec.params().beta;
    let tol = 1e-12;
    let (o, _) = rec
        .find_observable::<PsiPower>(|p| {
            (p.lambda - lambda).abs() <= tol * lambda
                && (p.x1 - x1).abs() <= tol
                && (p.x2 - x2).abs() <= tol
                && (p.beta - beta).abs() <= tol
        })
        .ok_or_else(|| crate::LabError::Usage(format!("psi0 power for ({lambda}, {x1}, {x2}) not registered")))?;
    Ok(rec.occupation(o, t)?[0])
}

/// ∫_{x1}^{x2} L(t,z) dz = Y_t([x1, x2]) from a registered [`IntervalIndicator`].
pub fn interval_occupation(rec: &PathRecorder, x1: f64, x2: f64, t: f64) -> Result<f64> {
    let (o, _) = rec
        .find_observable::<IntervalIndicator>(|i| (i.x1 - x1).abs() <= 1e-12 && (i.x2 - x2).abs() <= 1e-12)
        .ok_or_else(|| crate::LabError::Usage(format!("indicator of [{x1}, {x2}] not registered")))?;
    Ok(rec.occupation(o, t)?[0])
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacePoint {
    pub theta: f64,
    /// Mean of exp(-θ Ẑ).
    pub lhs: f64,
    pub se_lhs: f64,
    /// Mean of exp(θ^{1+β} T̂).
    pub rhs: f64,
    pub se_rhs: f64,
    /// |lhs - rhs| over the SE of the paired difference.
    pub z_score: f64,
    /// Mean of exp(-θ Ẑ - θ^{1+β} T̂); equals 1 for the exact process.
    pub martingale_mean: f64,
    pub martingale_se: f64,
    /// κ with mean exp(κ θ^{1+β} T̂) = lhs.
    pub fitted_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeChangeReport {
    pub lambda: f64,
    pub x1: f64,
    pub x2: f64,
    pub t: f64,
    pub beta: f64,
    pub t_hat: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub curve: Vec<LaplacePoint>,
}

impl TimeChangeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.curve.iter().map(|p| p.z_score).fold(0.0, f64::max)
    }
}

fn se_z(diff: &Moments) -> f64 {
    let m = diff.mean();
    if m == 0.0 {
        0.0
    } else {
        m.abs() / diff.se()
    }
}

/// Bisection for κ ≥ 0 with mean exp(κ θ^α T) = target (target ≥ 1).
fn fit_scale(theta_a: f64, t_hat: &[f64], target: f64) -> f64 {
    let f = |k: f64| t_hat.iter().map(|&t| (k * theta_a * t).exp()).sum::<f64>() / t_hat.len() as f64 - target;
    if t_hat.iter().all(|&t| t == 0.0) || target <= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Laplace-curve comparison from per-replica (Ẑ_t(x1,x2), T̂(t)).
pub fn time_change_from_samples(
    beta: f64,
    lambda: f64,
    (x1, x2): (f64, f64),
    t: f64,
    z_hat: &[f64],
    t_hat: &[f64],
    thetas: &[f64],
) -> Result<TimeChangeReport> {
    if z_hat.len() != t_hat.len() || z_hat.is_empty() {
        return usage("need matching, nonempty Ẑ and T̂ samples");
    }
    let alpha = 1.0 + beta;
    let curve = thetas
        .iter()
        .map(|&theta| {
            let ta = theta.powf(alpha);
            let (mut l, mut r, mut d, mut m) = (Moments::new(), Moments::new(), Moments::new(), Moments::new());
            for (&z, &tt) in z_hat.iter().zip(t_hat) {
                let a = (-theta * z).exp();
                let b = (ta * tt).exp();
                l.push(a);
                r.push(b);
                d.push(a - b);
                m.push((-theta * z - ta * tt).exp());
            }
            LaplacePoint {
                theta,
                lhs: l.mean(),
                se_lhs: l.se(),
                rhs: r.mean(),
                se_rhs: r.se(),
                z_score: se_z(&d),
                martingale_mean: m.mean(),
                martingale_se: m.se(),
                fitted_scale: if theta > 0.0 { fit_scale(ta, t_hat, l.mean()) } else { 1.0 },
            }
        })
        .collect();
    Ok(TimeChangeReport {
        lambda,
        x1,
        x2,
        t,
        beta,
        t_hat: t_hat.to_vec(),
        z_hat: z_hat.to_vec(),
        curve,
    })
}

/// Collects Ẑ = M̂_t(ψ0) and T̂(t) from each recorder and compares the curves.
pub fn time_change_check(
    recorders: &[PathRecorder],
    lambda: f64,
    x1: f64,
    x2: f64,
    t: f64,
    thetas: &[f64],
) -> Result<TimeChangeReport> {
    let beta = recorders
        .first()
        .map(|r| r.params().beta)
        .ok_or_else(|| crate::LabError::Usage("empty ensemble".into()))?;
    let mut z = Vec::with_capacity(recorders.len());
    let mut th = Vec::with_capacity(recorders.len());
    for r in recorders {
        th.push(compute_t(r, lambda, x1, x2, t)?);
        z.push(if x1 == x2 {
            0.0
        } else {
            crate::localtime_tanaka::martingale_increments(r, lambda, t, &[(x1, x2)])?[0].inside
        });
    }
    time_change_from_samples(beta, lambda, (x1, x2), t, &z, &th, thetas)
}

//! Regularity machinery: exponent conditions, the Gihman–Skorohod series
//! for g(h) = 3h^γ, an oscillation-based Hölder estimator, and a
//! max-density refinement probe on occupation histograms.

use std::collections::VecDeque;

use crate::error::{domain, LabError, Result};
use crate::particle_sbm::{OccupationGrid, PathRecorder};
use crate::stats::{fit_line, LineFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExponentConditions {
    pub beta_in_range: bool,
    pub q_in_range: bool,
    pub gamma_positive: bool,
    /// γ < 1 - 1/q.
    pub gamma_below_gap: bool,
    /// 1 - 1/q < β/(1+β).
    pub gap_below_ratio: bool,
    /// (γ < 1 - 1/q, 1 - q(1-γ) < 0); the two sides must agree.
    pub gap_equivalence: (bool, bool),
    /// (γ < β/(1+β), 1/β - γ(1 + 1/β) > 0). The right side reduces to
    /// γ < 1/(1+β), so the sides differ for γ in [β/(1+β), 1/(1+β)).
    pub ratio_equivalence: (bool, bool),
    pub all: bool,
}

pub fn check_exponent_conditions(beta: f64, gamma: f64, q: f64) -> ExponentConditions {
    let beta_in_range = beta > 0.0 && beta < 1.0;
    let q_in_range = q > 1.0 && q < 1.0 + beta;
    let gamma_positive = gamma > 0.0;
    let gap = 1.0 - 1.0 / q;
    let ratio = beta / (1.0 + beta);
    let gamma_below_gap = gamma < gap;
    let gap_below_ratio = gap < ratio;
    let gap_equivalence = (gamma_below_gap, 1.0 - q * (1.0 - gamma) < 0.0);
    let ratio_equivalence = (gamma < ratio, 1.0 / beta - gamma * (1.0 + 1.0 / beta) > 0.0);
    ExponentConditions {
        beta_in_range,
        q_in_range,
        gamma_positive,
        gamma_below_gap,
        gap_below_ratio,
        gap_equivalence,
        ratio_equivalence,
        all: beta_in_range && gamma_positive && gamma_below_gap && gap_below_ratio,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionParams {
    pub beta: f64,
    pub gamma: f64,
    pub q: f64,
    pub k: f64,
    pub r: f64,
    /// The unspecified constant C in q(r, h).
    pub c_free: f64,
    pub n_max: usize,
}

impl CriterionParams {
    pub fn new(beta: f64, gamma: f64, q: f64) -> Self {
        Self {
            beta,
            gamma,
            q,
            k: 1.0,
            r: 1.0,
            c_free: 1.0,
            n_max: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_beta(self.beta)?;
        if !(self.k > 0.0 && self.r > 0.0 && self.c_free > 0.0) {
            return domain("K, r and C must be positive");
        }
        if self.n_max < 16 {
            return domain("n_max must be at least 16");
        }
        Ok(())
    }

    /// 1/β - γ(1 + 1/β).
    pub fn s_b(&self) -> f64 {
        1.0 / self.beta - self.gamma * (1.0 + 1.0 / self.beta)
    }

    /// 1/(1+β) - γ.
    pub fn s_c(&self) -> f64 {
        1.0 / (1.0 + self.beta) - self.gamma
    }

    /// 1 - q(1-γ).
    pub fn e_a(&self) -> f64 {
        1.0 - self.q * (1.0 - self.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    Convergent,
    Divergent,
    /// Neither certificate was reached within n_max terms.
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub flag: Convergence,
    /// Partial sum (plus tail bound when convergent); infinite otherwise.
    pub value: f64,
    /// Certified bound on the neglected tail.
    pub tail_bound: f64,
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesReport {
    pub g_closed: f64,
    pub g_partial: f64,
    pub q_a: SeriesValue,
    pub q_b: SeriesValue,
    pub q_c: SeriesValue,
    /// (r, Q(0,r)) on the requested r-grid.
    pub q0_trend: Vec<(f64, f64)>,
    pub q0_strictly_decreasing: bool,
}

/// Σ_{n≥0} 3(2^{-n}K)^γ = 3K^γ / (1 - 2^{-γ}).
pub fn g_closed(gamma: f64, k: f64) -> f64 {
    3.0 * k.powf(gamma) / (1.0 - (-gamma).exp2())
}

/// G(m) = Σ_{n≥m} 3(2^{-n}K)^γ.
pub fn g_tail(gamma: f64, k: f64, m: usize) -> f64 {
    g_closed(gamma, k) * (-(m as f64) * gamma).exp2()
}

/// Partial sum of G until the geometric remainder drops below `tol`·sum.
pub fn g_partial(gamma: f64, k: f64, tol: f64) -> f64 {
    let ratio = (-gamma).exp2();
    let mut term = 3.0 * k.powf(gamma);
    let mut sum = 0.0;
    let mut terms = Vec::new();
    loop {
        terms.push(term);
        sum += term;
        term *= ratio;
        if term / (1.0 - ratio) <= tol * sum {
            break;
        }
    }
    // smallest first for accuracy
    terms.iter().rev().sum::<f64>() + term / (1.0 - ratio)
}

fn log_sum(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    (m + logs.iter().map(|&l| (l - m).exp()).sum::<f64>().ln()).exp()
}

/// Q_A = C r^{-q} K^{q(1-γ)} Σ 2^{n(1-q(1-γ))}.
pub fn q_a(p: &CriterionParams) -> SeriesValue {
    let pre = p.c_free * p.r.powf(-p.q) * p.k.powf(p.q * (1.0 - p.gamma));
    let ratio = p.e_a().exp2();
    if ratio < 1.0 {
        SeriesValue {
            flag: Convergence::Convergent,
            value: pre / (1.0 - ratio),
            tail_bound: 0.0,
            terms: 0,
        }
    } else {
        SeriesValue {
            flag: Convergence::Divergent,
            value: f64::INFINITY,
            tail_bound: f64::INFINITY,
            terms: 0,
        }
    }
}

/// Sums terms given in log space until a convergence or divergence
/// certificate holds at some index ≤ n_max.
fn certified_sum<F, C, D>(n_max: usize, log_term: F, converged: C, diverged: D) -> SeriesValue
where
    F: Fn(usize) -> f64,
    C: Fn(usize) -> bool,
    D: Fn(usize) -> bool,
{
    let mut logs = Vec::new();
    for n in 0..=n_max {
        let l = log_term(n);
        logs.push(l);
        if n > 0 && diverged(n) {
            return SeriesValue {
                flag: Convergence::Divergent,
                value: f64::INFINITY,
                tail_bound: f64::INFINITY,
                terms: n + 1,
            };
        }
        if converged(n) {
            // every later ratio is ≤ 1/2, so the tail is at most term_n
            let tail = l.exp();
            return SeriesValue {
                flag: Convergence::Convergent,
                value: log_sum(&logs) + tail,
                tail_bound: tail,
                terms: n + 1,
            };
        }
    }
    SeriesValue {
        flag: Convergence::Inconclusive,
        value: log_sum(&logs),
        tail_bound: f64::INFINITY,
        terms: n_max + 1,
    }
}

/// Q_B = Σ 2^n exp(-A 2^{n s_B}), A = C r^{(1+β)/β} K^{-s_B}.
pub fn q_b(p: &CriterionParams) -> SeriesValue {
    let s = p.s_b();
    let a = p.c_free * p.r.powf((1.0 + p.beta) / p.beta) * p.k.powf(-s);
    let inner = |n: usize| a * (n as f64 * s).exp2();
    let ln2 = std::f64::consts::LN_2;
    certified_sum(
        p.n_max,
        |n| n as f64 * ln2 - inner(n),
        // ratio_m = 2 exp(-(inner_{m+1} - inner_m)) ≤ 1/2 from n on when inner grows
        |n| {
            let grow = inner(n + 1) - inner(n);
            inner(n + 1) > inner(n) && grow >= 2.0 * ln2
        },
        // inner nonincreasing and term ≥ 1: terms stay ≥ 2^n e^{-inner_0}
        |n| inner(n) <= inner(n.saturating_sub(1)) && n as f64 * ln2 - inner(n) >= 0.0,
    )
}

/// Q_C = Σ 2^n b_n^{e_n}, b_n = C r^{-1} K^{s_C} 2^{-n s_C}, e_n = C r K^{-s_C} 2^{n s_C}.
pub fn q_c(p: &CriterionParams) -> SeriesValue {
    let s = p.s_c();
    let b = |n: usize| p.c_free / p.r * p.k.powf(s) * (-(n as f64) * s).exp2();
    let e = |n: usize| p.c_free * p.r * p.k.powf(-s) * (n as f64 * s).exp2();
    let ln2 = std::f64::consts::LN_2;
    certified_sum(
        p.n_max,
        |n| n as f64 * ln2 + e(n) * b(n).ln(),
        // b ≤ 1/2 decreasing and e increasing: ratio ≤ 2 b_n^{e_{n+1}-e_n} ≤ 1/2
        |n| {
            let bn = b(n);
            b(n + 1) < bn && e(n + 1) > e(n) && bn <= 0.5 && (e(n + 1) - e(n)) * (-bn.ln()) >= 2.0 * ln2
        },
        // e nonincreasing, b nondecreasing: e_n ln b_n bounded below, terms ~ 2^n
        |n| {
            let m = n.saturating_sub(1);
            e(n) <= e(m) && b(n) >= b(m) && n as f64 * ln2 + e(n) * b(n).ln() >= 0.0
        },
    )
}

fn total(a: &SeriesValue, b: &SeriesValue, c: &SeriesValue) -> f64 {
    a.value + b.value + c.value
}

/// Q(0, r) = Q_A + Q_B + Q_C at radius r.
pub fn q0(p: &CriterionParams, r: f64) -> f64 {
    let pr = CriterionParams { r, ..p.clone() };
    total(&q_a(&pr), &q_b(&pr), &q_c(&pr))
}

pub fn gs_series(p: &CriterionParams, r_grid: &[f64]) -> Result<SeriesReport> {
    p.validate()?;
    if !(p.gamma > 0.0) {
        return domain("gamma must be positive");
    }
    let q0_trend: Vec<(f64, f64)> = r_grid.iter().map(|&r| (r, q0(p, r))).collect();
    Ok(SeriesReport {
        g_closed: g_closed(p.gamma, p.k),
        g_partial: g_partial(p.gamma, p.k, 1e-15),
        q_a: q_a(p),
        q_b: q_b(p),
        q_c: q_c(p),
        q0_strictly_decreasing: q0_trend.windows(2).all(|w| w[1].1 < w[0].1),
        q0_trend,
    })
}

impl SeriesReport {
    /// Flat `key = value` text block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let flag = |v: &SeriesValue| format!("{:?}", v.flag).to_lowercase();
        s += &format!("g_closed = {:.15e}\ng_partial = {:.15e}\n", self.g_closed, self.g_partial);
        for (name, v) in [("q_a", &self.q_a), ("q_b", &self.q_b), ("q_c", &self.q_c)] {
            s += &format!(
                "{name}.flag = {}\n{name}.value = {:.15e}\n{name}.tail_bound = {:.3e}\n{name}.terms = {}\n",
                flag(v),
                v.value,
                v.tail_bound,
                v.terms
            );
        }
        s += &format!("q0_strictly_decreasing = {}\n", self.q0_strictly_decreasing);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolderEstimate {
    pub exponent: f64,
    /// exponent ± 2 standard errors of the slope.
    pub band: (f64, f64),
    pub fit: LineFit,
    pub scales: Vec<f64>,
    pub oscillations: Vec<f64>,
}

impl HolderEstimate {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.band.0 && v <= self.band.1
    }
}

/// max over i of (max - min) of f on windows of `m + 1` consecutive points.
pub fn max_oscillation(f: &[f64], m: usize) -> f64 {
    let w = m + 1;
    if f.len() < 2 || m == 0 {
        return 0.0;
    }
    let w = w.min(f.len());
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    for i in 0..f.len() {
        while maxq.back().is_some_and(|&j| f[j] <= f[i]) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| f[j] >= f[i]) {
            minq.pop_back();
        }
        minq.push_back(i);
        while maxq[0] + w <= i {
            maxq.pop_front();
        }
        while minq[0] + w <= i {
            minq.pop_front();
        }
        if i + 1 >= w {
            best = best.max(f[maxq[0]] - f[minq[0]]);
        }
    }
    best
}

/// Slope of log ω(h) against log h for dyadic h = 2^j dx, j in `levels`.
pub fn holder_exponent(values: &[f64], dx: f64, levels: std::ops::RangeInclusive<u32>) -> Result<HolderEstimate> {
    if values.len() < 64 {
        return domain("need at least 64 grid points");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return domain("field must be finite");
    }
    let mut scales = Vec::new();
    let mut osc = Vec::new();
    for j in levels {
        let m = 1usize << j;
        if m >= values.len() {
            break;
        }
        scales.push(m as f64 * dx);
        osc.push(max_oscillation(values, m));
    }
    if osc.iter().any(|&o| o <= 0.0) || scales.len() < 2 {
        return Err(LabError::Numeric {
            message: "degenerate oscillation fit (constant field or too few scales)".into(),
            estimate: 0.0,
            error: f64::INFINITY,
        });
    }
    let lx: Vec<f64> = scales.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = osc.iter().map(|o| o.ln()).collect();
    let fit = fit_line(&lx, &ly).ok_or_else(|| LabError::Numeric {
        message: "oscillation regression failed".into(),
        estimate: 0.0,
        error: f64::INFINITY,
    })?;
    Ok(HolderEstimate {
        exponent: fit.slope,
        band: (fit.slope - 2.0 * fit.slope_se, fit.slope + 2.0 * fit.slope_se),
        fit,
        scales,
        oscillations: osc,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub bin_width: f64,
    pub max_density: f64,
}

/// Max over coarse bins of occupation / bin volume, after merging fine bins
/// (`fine` laid out row-major, first coordinate fastest) into each width.
pub fn probe_from_bins(dim: usize, fine_width: f64, bins_per_axis: usize, fine: &[f64], widths: &[f64]) -> Result<Vec<ProbeRow>> {
    if fine.iter().sum::<f64>() <= 0.0 {
        return domain("window has no occupation");
    }
    let mut rows = Vec::with_capacity(widths.len());
    for &w in widths {
        let f = (w / fine_width).round() as usize;
        if f == 0 || ((f as f64) * fine_width - w).abs() > 1e-9 * w || bins_per_axis % f != 0 {
            return domain(format!("bin width {w} is not a divisor-aligned multiple of {fine_width}"));
        }
        let nb = bins_per_axis / f;
        let mut coarse = vec![0.0; nb.pow(dim as u32)];
        if dim == 1 {
            for (i, v) in fine.iter().enumerate() {
                coarse[i / f] += v;
            }
        } else {
            for j in 0..bins_per_axis {
                for i in 0..bins_per_axis {
                    coarse[(j / f) * nb + i / f] += fine[j * bins_per_axis + i];
                }
            }
        }
        let vol = w.powi(dim as i32);
        rows.push(ProbeRow {
            bin_width: w,
            max_density: coarse.iter().cloned().fold(0.0, f64::max) / vol,
        });
    }
    Ok(rows)
}

/// [`probe_from_bins`] on the occupation histogram registered in `rec`.
pub fn unboundedness_probe(rec: &PathRecorder, widths: &[f64], t: f64) -> Result<Vec<ProbeRow>> {
    let (o, g) = rec
        .find_observable::<OccupationGrid>(|_| true)
        .ok_or_else(|| LabError::Usage("no occupation grid registered".into()))?;
    let occ = rec.occupation(o, t)?;
    probe_from_bins(g.spatial_dim(), g.width(), g.bins_per_axis(), occ, widths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_conditions() {
        let c = check_exponent_conditions(0.5, 0.2, 1.4);
        assert!(c.all && c.q_in_range);
        assert!(!check_exponent_conditions(0.5, 1.0 / 3.0, 1.45).all);
        assert!(!check_exponent_conditions(0.5, 0.2, 1.0).all);
    }

    #[test]
    fn g_values() {
        assert!((g_closed(0.5, 1.0) - 10.242_640_687_119_286).abs() < 1e-12);
        assert!((g_partial(0.5, 1.0, 1e-15) - g_closed(0.5, 1.0)).abs() < 1e-10);
        assert!((g_tail(0.5, 1.0, 0) - g_closed(0.5, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn series_flags_at_examples() {
        let p = CriterionParams::new(0.5, 0.2, 1.4);
        assert_eq!(q_a(&p).flag, Convergence::Convergent);
        let p4 = CriterionParams::new(0.5, 0.4, 1.4);
        assert_eq!(q_b(&p4).flag, Convergence::Convergent);
        let p7 = CriterionParams::new(0.5, 0.7, 1.4);
        assert_eq!(q_b(&p7).flag, Convergence::Divergent);
    }

    #[test]
    fn q0_trend_reference() {
        let p = CriterionParams::new(0.5, 0.2, 1.4);
        let rep = gs_series(&p, &[1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert!(rep.q0_strictly_decreasing);
        assert!(rep.q0_trend.last().unwrap().1 < 1e-3);
    }

    #[test]
    fn oscillation_window() {
        let f = [0.0, 1.0, 0.0, 3.0, 0.0];
        assert_eq!(max_oscillation(&f, 1), 3.0);
        assert_eq!(max_oscillation(&f, 4), 3.0);
        assert_eq!(max_oscillation(&[1.0, 2.0, 4.0], 1), 2.0);
    }

    #[test]
    fn constant_field_is_degenerate() {
        assert!(holder_exponent(&[2.0; 100], 0.01, 1..=4).is_err());
        assert!(holder_exponent(&[2.0; 10], 0.01, 1..=2).is_err());
    }

    #[test]
    fn empty_window_errors() {
        assert!(probe_from_bins(2, 0.05, 4, &[0.0; 16], &[0.1]).is_err());
        let rows = probe_from_bins(1, 0.05, 4, &[0.0, 1.0, 0.0, 0.0], &[0.05, 0.1, 0.2]).unwrap();
        assert_eq!(rows[0].max_density, 20.0);
        assert_eq!(rows[2].max_density, 5.0);
    }
}

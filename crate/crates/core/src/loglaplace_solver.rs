//! Deterministic solver for the mild log-Laplace equation
//!
//!   V_t = P_t φ - ∫_0^t P_s (V_{t-s})^{1+β} ds,
//!
//! used as an oracle for E exp(-⟨X_t, φ⟩) = exp(-⟨X_0, V_t⟩).
//!
//! Space is a uniform grid with constant extrapolation past the edges, so a
//! spatially constant φ stays constant. P_s acts by a normalized discrete
//! Gaussian truncated at 8√s. Writing A_i = ∫_0^{t_i} P_{t_i - r} F(V_r) dr
//! with F(v) = v_+^{1+β}, the Duhamel integral is advanced by
//! A_{i+1} = P_dt A_i + dt/2 (P_dt F(V_i) + F(V_{i+1})), and whole-path
//! Picard sweeps V ← P_t φ - A[V] run until the sup-change is below tol.

use crate::error::{domain, LabError, Result};
use crate::kernels_green::FiniteMeasure;
use crate::stats::Moments;

const KERNEL_CUT: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid1d {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid1d {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_max > x_min) || n < 3 {
            return domain("grid needs x_min < x_max and at least 3 points");
        }
        Ok(Self {
            x_min,
            dx: (x_max - x_min) / (n - 1) as f64,
            n,
        })
    }

    /// Grid over [x_min, x_max] with spacing at most `dx`.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return domain("grid spacing must be positive");
        }
        Self::new(x_min, x_max, ((x_max - x_min) / dx).ceil() as usize + 1)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + self.dx * j as f64
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n).map(|j| f(self.x(j))).collect()
    }

    /// Linear interpolation, constant outside the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let r = (x - self.x_min) / self.dx;
        if r <= 0.0 {
            return values[0];
        }
        if r >= (self.n - 1) as f64 {
            return values[self.n - 1];
        }
        let j = r.floor() as usize;
        let w = r - j as f64;
        values[j] * (1.0 - w) + values[j + 1] * w
    }
}

/// Discrete heat semigroup P_s on a grid.
#[derive(Clone, Debug)]
pub struct GridSemigroup {
    weights: Vec<f64>,
}

impl GridSemigroup {
    pub fn new(grid: &Grid1d, s: f64) -> Self {
        if s <= 0.0 {
            return Self { weights: vec![1.0] };
        }
        let sd = s.sqrt();
        let reach = (KERNEL_CUT * sd / grid.dx).ceil() as usize;
        let mut w: Vec<f64> = (0..=reach)
            .map(|m| {
                let x = m as f64 * grid.dx;
                (-0.5 * x * x / s).exp()
            })
            .collect();
        let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        w.iter_mut().for_each(|v| *v /= total);
        Self { weights: w }
    }

    /// out_j = Σ_m w_|m| f_{j+m}, with f extended by its edge values.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len() as isize;
        let reach = self.weights.len() as isize - 1;
        let left = f[0];
        let right = f[f.len() - 1];
        let at = |k: isize| -> f64 {
            if k < 0 {
                left
            } else if k >= n {
                right
            } else {
                f[k as usize]
            }
        };
        for j in 0..n {
            let mut s = self.weights[0] * f[j as usize];
            for m in 1..=reach {
                s += self.weights[m as usize] * (at(j - m) + at(j + m));
            }
            out[j as usize] = s;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub beta: f64,
    pub t_end: f64,
    pub time_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Drop the nonlinear term (then V = P_t φ).
    pub linear_only: bool,
}

impl SolverConfig {
    pub fn new(beta: f64, t_end: f64, time_steps: usize) -> Self {
        Self {
            beta,
            t_end,
            time_steps,
            tol: 1e-9,
            max_iter: 200,
            linear_only: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LogLaplaceSolution {
    pub grid: Grid1d,
    pub times: Vec<f64>,
    /// values[i][j] = V(t_i, x_j).
    pub values: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    /// Sup-change after each Picard sweep.
    pub history: Vec<f64>,
}

impl LogLaplaceSolution {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("solution has at least one time")
    }

    /// ⟨μ, V(t_end, ·)⟩ with linear interpolation between grid points.
    pub fn apply_measure(&self, mu: &FiniteMeasure) -> f64 {
        let v = self.final_values();
        mu.apply(|x| self.grid.interpolate(v, x))
    }
}

fn picard_sweep(
    cfg: &SolverConfig,
    step: &GridSemigroup,
    linear: &[Vec<f64>],
    current: &[Vec<f64>],
    next: &mut [Vec<f64>],
) {
    let p = 1.0 + cfg.beta;
    let n = linear[0].len();
    let dt = cfg.t_end / cfg.time_steps as f64;
    let f = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| x.max(0.0).powf(p)).collect() };
    let mut a = vec![0.0; n];
    let mut pa = vec![0.0; n];
    let mut pf = vec![0.0; n];
    next[0].copy_from_slice(&linear[0]);
    let mut f_prev = f(&current[0]);
    for i in 0..cfg.time_steps {
        let f_next = f(&current[i + 1]);
        step.apply(&a, &mut pa);
        step.apply(&f_prev, &mut pf);
        for j in 0..n {
            a[j] = pa[j] + 0.5 * dt * (pf[j] + f_next[j]);
            next[i + 1][j] = linear[i + 1][j] - a[j];
        }
        f_prev = f_next;
    }
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Solves the mild equation for gridded φ ≥ 0 on `grid`.
pub fn solve_mild(phi: &[f64], grid: &Grid1d, cfg: &SolverConfig) -> Result<LogLaplaceSolution> {
    run(phi, grid, cfg, None)
}

/// Exactly `sweeps` Picard sweeps from V⁽⁰⁾ = P_t φ, no convergence test.
pub fn picard_iterate(phi: &[f64], grid: &Grid1d, cfg: &SolverConfig, sweeps: usize) -> Result<LogLaplaceSolution> {
    run(phi, grid, cfg, Some(sweeps))
}

fn run(phi: &[f64], grid: &Grid1d, cfg: &SolverConfig, fixed: Option<usize>) -> Result<LogLaplaceSolution> {
    crate::error::check_beta(cfg.beta)?;
    if phi.len() != grid.n {
        return domain("phi must have one value per grid point");
    }
    if phi.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return domain("phi must be finite and nonnegative");
    }
    if !(cfg.t_end >= 0.0) || !(cfg.tol > 0.0) {
        return domain("need t_end ≥ 0 and tol > 0");
    }
    let steps = if cfg.t_end == 0.0 { 0 } else { cfg.time_steps.max(1) };
    let cfg = SolverConfig {
        time_steps: steps,
        ..cfg.clone()
    };
    let dt = if steps == 0 { 0.0 } else { cfg.t_end / steps as f64 };
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let step = GridSemigroup::new(grid, dt);
    let mut linear = vec![phi.to_vec()];
    for i in 0..steps {
        let mut next = vec![0.0; grid.n];
        step.apply(&linear[i], &mut next);
        linear.push(next);
    }
    if cfg.linear_only || steps == 0 || fixed == Some(0) {
        return Ok(LogLaplaceSolution {
            grid: grid.clone(),
            times,
            values: linear,
            residual: 0.0,
            iterations: 0,
            history: Vec::new(),
        });
    }
    let mut current = linear.clone();
    let mut next = linear.clone();
    let mut history = Vec::new();
    for it in 1..=fixed.unwrap_or(cfg.max_iter) {
        picard_sweep(&cfg, &step, &linear, &current, &mut next);
        let change = sup_diff(&current, &next);
        std::mem::swap(&mut current, &mut next);
        history.push(change);
        if fixed == Some(it) || (fixed.is_none() && change < cfg.tol) {
            return Ok(LogLaplaceSolution {
                grid: grid.clone(),
                times,
                values: current,
                residual: change,
                iterations: it,
                history,
            });
        }
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(LabError::Numeric {
        message: format!("Picard iteration did not converge in {} sweeps", cfg.max_iter),
        estimate: current.last().map(|v| v.iter().cloned().fold(0.0, f64::max)).unwrap_or(0.0),
        error: residual,
    })
}

pub fn first_picard_iterate(phi: &[f64], grid: &Grid1d, cfg: &SolverConfig) -> Result<LogLaplaceSolution> {
    picard_iterate(phi, grid, cfg, 1)
}

/// Solver grid covering μ and φ's support plus 8√t on each side.
pub fn default_grid(support: (f64, f64), t: f64, dx: f64) -> Result<Grid1d> {
    let pad = KERNEL_CUT * t.sqrt() + 1.0;
    Grid1d::with_spacing(support.0 - pad, support.1 + pad, dx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub z_score: f64,
    pub replicas: usize,
}

/// Compares the replica average of exp(-⟨X_t, φ⟩) with exp(-⟨μ, V_t⟩).
/// `samples` holds ⟨X_t^N, φ⟩ for each replica.
pub fn duality_report(samples: &[f64], rhs_exponent: f64) -> DualityReport {
    let m = Moments::from_slice(&samples.iter().map(|&x| (-x).exp()).collect::<Vec<_>>());
    let rhs = (-rhs_exponent).exp();
    let diff = (m.mean() - rhs).abs();
    let z = if diff == 0.0 { 0.0 } else { diff / m.se() };
    DualityReport {
        lhs: m.mean(),
        rhs,
        se: m.se(),
        z_score: z,
        replicas: samples.len(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub n_scale: u64,
    pub replicas: usize,
    pub seed: u64,
    /// Step bound; `None` uses 0.1 / branch_rate.
    pub dt: Option<f64>,
}

/// Runs both engines: the solver for the right side and `replicas`
/// particle runs for the left side.
pub fn duality_check<F>(mu: &FiniteMeasure, phi: F, support: (f64, f64), t: f64, beta: f64, mc: &McConfig) -> Result<DualityReport>
where
    F: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
{
    use crate::particle_sbm::{simulate, ModelParams, ScalarFn, SharedObservable};
    use crate::rng_stable::RngStream;
    use std::sync::Arc;

    let lo = mu.atoms().iter().map(|a| a.0).chain(mu.density().iter().map(|d| d.0)).fold(support.0, f64::min);
    let hi = mu.atoms().iter().map(|a| a.0).chain(mu.density().iter().map(|d| d.0)).fold(support.1, f64::max);
    let grid = default_grid((lo, hi), t, 0.01)?;
    let phi_grid = grid.sample(&phi);
    let steps = ((t / 0.0025).ceil() as usize).max(1);
    let sol = solve_mild(&phi_grid, &grid, &SolverConfig::new(beta, t, steps))?;
    let rhs_exp = sol.apply_measure(mu);

    let mut params = ModelParams::new(beta, mc.n_scale, 1, t);
    if let Some(dt) = mc.dt {
        params = params.with_dt(dt);
    }
    let obs: Vec<SharedObservable> = vec![Arc::new(ScalarFn::new("phi", phi))];
    let mut samples = Vec::with_capacity(mc.replicas);
    for r in 0..mc.replicas {
        let rec = simulate(mu, &params, &obs, &mut RngStream::new(mc.seed, r as u64))?;
        samples.push(rec.instant(0, t)?[0]);
    }
    Ok(duality_report(&samples, rhs_exp))
}

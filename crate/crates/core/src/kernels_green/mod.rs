//! Heat kernel, Brownian semigroup, the λ-resolvent kernel G_λ and its
//! derivative kernel g_λ.

mod measure;

pub use measure::FiniteMeasure;

use std::f64::consts::PI;

use crate::error::{domain, LabError, Result};
use crate::quad::{integrate, integrate_pieces};

/// Gaussian tail cut used by semigroup quadratures, in standard deviations.
const GAUSS_CUT: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenParams {
    lambda: f64,
}

impl GreenParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            domain(format!("lambda must be positive, got {lambda}"))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// √(2λ), the decay rate of G_λ.
    pub fn rate(&self) -> f64 {
        (2.0 * self.lambda).sqrt()
    }
}

/// p_s(x) in one dimension, without argument checks.
#[inline]
pub fn heat_kernel_1d(s: f64, x: f64) -> f64 {
    (-x * x / (2.0 * s)).exp() / (2.0 * PI * s).sqrt()
}

/// Brownian transition density at time `s` for a point `x` of dimension 1 or 2.
pub fn heat_kernel(s: f64, x: &[f64]) -> Result<f64> {
    if !(s > 0.0) {
        return domain(format!("heat kernel time must be positive, got {s}"));
    }
    match x.len() {
        1 => Ok(heat_kernel_1d(s, x[0])),
        2 => Ok(heat_kernel_1d(s, x[0]) * heat_kernel_1d(s, x[1])),
        d => domain(format!("dimension must be 1 or 2, got {d}")),
    }
}

/// (P_s f)(x) = E f(x + √s Z) by adaptive quadrature. `kinks` lists points
/// where f is not smooth so the quadrature can split there.
pub fn heat_semigroup<F: Fn(f64) -> f64>(s: f64, f: F, x: f64, kinks: &[f64]) -> Result<f64> {
    if s < 0.0 {
        return domain(format!("semigroup time must be nonnegative, got {s}"));
    }
    if s == 0.0 {
        return Ok(f(x));
    }
    let sd = s.sqrt();
    let mut breaks = vec![-GAUSS_CUT, GAUSS_CUT];
    for &k in kinks {
        let z = (k - x) / sd;
        if z > -GAUSS_CUT && z < GAUSS_CUT {
            breaks.push(z);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let r = integrate_pieces(
        |z| (-0.5 * z * z).exp() / (2.0 * PI).sqrt() * f(x + sd * z),
        &breaks,
        1e-12,
        1e-12,
    )?;
    Ok(r.value)
}

/// ⟨μ, P_s f⟩.
pub fn measure_semigroup<F: Fn(f64) -> f64>(mu: &FiniteMeasure, s: f64, f: F, kinks: &[f64]) -> Result<f64> {
    let mut err = None;
    let v = mu.apply(|x| match heat_semigroup(s, &f, x, kinks) {
        Ok(v) => v,
        Err(e) => {
            err = Some(e);
            f64::NAN
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// ∫_0^t ⟨μ, P_s f⟩ ds, the mean occupation functional.
pub fn occupation_mean<F: Fn(f64) -> f64>(mu: &FiniteMeasure, t: f64, f: F, kinks: &[f64]) -> Result<f64> {
    if t < 0.0 {
        return domain("time must be nonnegative");
    }
    let mut err = None;
    let r = integrate(
        |s| match measure_semigroup(mu, s, &f, kinks) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        },
        0.0,
        t,
        1e-10,
        1e-10,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(r.value),
    }
}

/// G_λ(x) = ∫_0^∞ e^{-λs} p_s(x) ds evaluated numerically in log time.
pub fn green_numeric(lambda: f64, x: f64) -> Result<f64> {
    GreenParams::new(lambda)?;
    let x2 = x * x;
    // Integrand in u = ln s; smooth, with e^{u/2} decay on the left and
    // double-exponential decay on the right.
    let h = |u: f64| (0.5 * u - lambda * u.exp() - 0.5 * x2 * (-u).exp()).exp() / (2.0 * PI).sqrt();
    let u_lo = -60.0;
    let u_hi = (80.0 / lambda).ln();
    let r = integrate(h, u_lo, u_hi, 1e-11, 1e-13).map_err(|e| match e {
        LabError::Numeric { estimate, error, .. } => LabError::Numeric {
            message: format!("green_numeric(lambda={lambda}, x={x}) failed"),
            estimate,
            error,
        },
        other => other,
    })?;
    // Left remainder ∫_{-∞}^{u_lo} is at most 2e^{u_lo/2}/√(2π) ≈ 7e-14.
    let left = 2.0 * (0.5 * u_lo).exp() / (2.0 * PI).sqrt() * (-0.5 * x2 * (-u_lo).exp()).exp();
    Ok(r.value + left)
}

/// G_λ(x) = e^{-√(2λ)|x|} / √(2λ).
#[inline]
pub fn green_closed(lambda: f64, x: f64) -> f64 {
    let a = (2.0 * lambda).sqrt();
    (-a * x.abs()).exp() / a
}

/// g_λ(x) = -sgn(x) e^{-√(2λ)|x|}, with sgn(0) = 0.
#[inline]
pub fn g_lambda(lambda: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let a = (2.0 * lambda).sqrt();
    -x.signum() * (-a * x.abs()).exp()
}

/// ⟨μ, f⟩.
pub fn measure_apply<F: FnMut(f64) -> f64>(mu: &FiniteMeasure, f: F) -> f64 {
    mu.apply(f)
}

/// One-sided derivatives of x ↦ ⟨μ, G_λ(· - x)⟩ at `x`, returned as (right, left).
///
/// Away from atoms the derivative is ⟨μ, y ↦ g_λ(x - y)⟩; an atom at x adds a
/// corner of height ∓μ({x}).
pub fn green_one_sided_derivatives(mu: &FiniteMeasure, lambda: f64, x: f64) -> Result<(f64, f64)> {
    GreenParams::new(lambda)?;
    let smooth = mu.apply(|y| g_lambda(lambda, x - y));
    let atom = mu.atom_mass_at(x);
    Ok((smooth - atom, smooth + atom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0, &[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let lhs = heat_kernel(4.0, &[2.0]).unwrap();
        let rhs = 0.5 * heat_kernel(1.0, &[1.0]).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
        assert!(heat_kernel(0.0, &[0.0]).is_err());
        assert!(heat_kernel(1.0, &[0.0, 0.0, 0.0]).is_err());
        let two = heat_kernel(0.5, &[0.3, -0.2]).unwrap();
        assert!((two - heat_kernel_1d(0.5, 0.3) * heat_kernel_1d(0.5, -0.2)).abs() < 1e-16);
    }

    #[test]
    fn heat_kernel_normalized() {
        let r = integrate(|x| heat_kernel_1d(0.37, x), -20.0, 20.0, 1e-13, 0.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn green_examples() {
        assert!((green_numeric(0.5, 0.0).unwrap() - 1.0).abs() < 1e-8);
        assert!((green_numeric(2.0, 1.0).unwrap() - 0.5 * (-2.0f64).exp()).abs() < 1e-8);
        let a = green_numeric(1.0, 0.7).unwrap();
        let b = green_numeric(1.0, -0.7).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert_eq!(green_closed(0.5, 0.0), 1.0);
        assert_eq!(green_closed(2.0, 0.0), 0.5);
        assert!(green_numeric(0.0, 1.0).is_err());
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_lambda(1.0, 0.0), 0.0);
        assert!((g_lambda(0.5, 1.0) + (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(g_lambda(2.0, -0.3), -g_lambda(2.0, 0.3));
    }

    #[test]
    fn one_sided_at_atom() {
        let mu = FiniteMeasure::dirac(0.0, 1.0).unwrap();
        assert_eq!(green_one_sided_derivatives(&mu, 1.0, 0.0).unwrap(), (-1.0, 1.0));
        let (r, l) = green_one_sided_derivatives(&mu, 0.5, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((r + e).abs() < 1e-15 && (l + e).abs() < 1e-15);
    }

    #[test]
    fn one_sided_match_finite_differences() {
        // 400 nodes keep every test point off the density grid.
        let mu = FiniteMeasure::uniform(-1.0, 1.0, 1.0, 400)
            .unwrap()
            .with_atoms(&[(0.0, 1.0)])
            .unwrap();
        let lambda = 0.7;
        let f = |x: f64| mu.apply(|y| green_closed(lambda, y - x));
        let h = 1e-6;
        for &x in &[0.0, 0.3, -0.77, 1.5] {
            let (r, l) = green_one_sided_derivatives(&mu, lambda, x).unwrap();
            let fd_r = (f(x + h) - f(x)) / h;
            let fd_l = (f(x) - f(x - h)) / h;
            assert!((fd_r - r).abs() < 1e-4, "x {x}: {fd_r} vs {r}");
            assert!((fd_l - l).abs() < 1e-4, "x {x}: {fd_l} vs {l}");
        }
    }

    #[test]
    fn semigroup_of_constant_and_linear() {
        assert!((heat_semigroup(0.3, |_| 2.0, 1.0, &[]).unwrap() - 2.0).abs() < 1e-12);
        assert!((heat_semigroup(0.3, |y| y * y, 1.0, &[]).unwrap() - 1.3).abs() < 1e-11);
    }

    #[test]
    fn semigroup_of_green_closed_form() {
        // E e^{-a|x+√sZ|} = e^{a²s/2}[e^{-ax}Φ(x/√s - a√s) + e^{ax}Φ(-x/√s - a√s)].
        use statrs::function::erf::erfc;
        let phi = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let (lambda, s, x): (f64, f64, f64) = (1.0, 0.4, 0.3);
        let a = (2.0f64 * lambda).sqrt();
        let sd = s.sqrt();
        let exact = (a * a * s / 2.0).exp()
            * ((-a * x).exp() * phi(x / sd - a * sd) + (a * x).exp() * phi(-x / sd - a * sd))
            / a;
        let num = heat_semigroup(s, |y| green_closed(lambda, y), x, &[0.0]).unwrap();
        assert!((num - exact).abs() < 1e-11, "{num} vs {exact}");
    }
}

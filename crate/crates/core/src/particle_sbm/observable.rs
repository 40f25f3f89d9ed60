//! Functionals ⟨X_s, f⟩ evaluated on every step of a simulation.

use std::any::Any;
use std::sync::Arc;

use super::panel::{ExpPanelSums, GaussPanelSums, UniformPanel};
use crate::error::{domain, Result};

/// A vector of test functions integrated against the particle measure.
pub trait Observable: Send + Sync {
    fn name(&self) -> String;

    /// Number of scalar outputs.
    fn len(&self) -> usize;

    /// Spatial dimension the functions accept; `None` accepts any.
    fn dim(&self) -> Option<usize> {
        Some(1)
    }

    /// Adds `weight · Σ_i f_j(x_i)` into `out[j]`. `coords` stores `dim`
    /// consecutive values per particle.
    fn accumulate(&self, coords: &[f64], dim: usize, weight: f64, out: &mut [f64]);

    fn as_any(&self) -> &dyn Any;
}

pub type SharedObservable = Arc<dyn Observable>;

/// f ≡ 1.
#[derive(Clone, Debug, Default)]
pub struct Mass;

impl Observable for Mass {
    fn name(&self) -> String {
        "mass".into()
    }
    fn len(&self) -> usize {
        1
    }
    fn dim(&self) -> Option<usize> {
        None
    }
    fn accumulate(&self, coords: &[f64], dim: usize, weight: f64, out: &mut [f64]) {
        out[0] += (coords.len() / dim) as f64 * weight;
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

type ScalarFnBox = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A single user-supplied function of one real variable.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    f: ScalarFnBox,
}

impl ScalarFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

impl Observable for ScalarFn {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn len(&self) -> usize {
        1
    }
    fn accumulate(&self, coords: &[f64], _dim: usize, weight: f64, out: &mut [f64]) {
        let s: f64 = coords.iter().map(|&x| (self.f)(x)).sum();
        out[0] += weight * s;
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Indicator of the closed interval [x1, x2].
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalIndicator {
    pub x1: f64,
    pub x2: f64,
}

impl Observable for IntervalIndicator {
    fn name(&self) -> String {
        format!("indicator[{},{}]", self.x1, self.x2)
    }
    fn len(&self) -> usize {
        1
    }
    fn accumulate(&self, coords: &[f64], _dim: usize, weight: f64, out: &mut [f64]) {
        let c = coords.iter().filter(|&&x| x >= self.x1 && x <= self.x2).count();
        out[0] += weight * c as f64;
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// ψ0(y)^(1+β) with ψ0(y) = (g_λ(y-x2) - g_λ(y-x1))·1{x1 ≤ y ≤ x2}.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiPower {
    pub lambda: f64,
    pub x1: f64,
    pub x2: f64,
    pub beta: f64,
}

impl PsiPower {
    pub fn new(lambda: f64, x1: f64, x2: f64, beta: f64) -> Result<Self> {
        if !(x1 <= x2) {
            return domain("interval needs x1 ≤ x2");
        }
        crate::error::check_beta(beta)?;
        Ok(Self { lambda, x1, x2, beta })
    }

    pub fn psi0(&self, y: f64) -> f64 {
        psi0(self.lambda, self.x1, self.x2, y)
    }
}

/// ψ0(y) = (g_λ(y-x2) - g_λ(y-x1))·1{x1 ≤ y ≤ x2}; between the endpoints it
/// equals e^{-a(x2-y)} + e^{-a(y-x1)}.
pub fn psi0(lambda: f64, x1: f64, x2: f64, y: f64) -> f64 {
    if y < x1 || y > x2 {
        return 0.0;
    }
    use crate::kernels_green::g_lambda;
    g_lambda(lambda, y - x2) - g_lambda(lambda, y - x1)
}

impl Observable for PsiPower {
    fn name(&self) -> String {
        format!("psi0_pow[{},{},{},{}]", self.lambda, self.x1, self.x2, self.beta)
    }
    fn len(&self) -> usize {
        1
    }
    fn accumulate(&self, coords: &[f64], _dim: usize, weight: f64, out: &mut [f64]) {
        let p = 1.0 + self.beta;
        let s: f64 = coords
            .iter()
            .filter(|&&y| y >= self.x1 && y <= self.x2)
            .map(|&y| self.psi0(y).powf(p))
            .sum();
        out[0] += weight * s;
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// G_λ(y - x_j) and g_λ(x_j - y) on a panel, for several λ.
///
/// Output layout: for λ index l, `[l·2P, l·2P + P)` holds the Green sums
/// and `[l·2P + P, (l+1)·2P)` the derivative sums.
#[derive(Clone, Debug)]
pub struct GreenPanel {
    panel: UniformPanel,
    lambdas: Vec<f64>,
}

impl GreenPanel {
    pub fn new(panel: UniformPanel, lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) {
            return domain("green panel needs positive lambdas");
        }
        Ok(Self { panel, lambdas })
    }

    pub fn panel(&self) -> &UniformPanel {
        &self.panel
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda_index(&self, lambda: f64) -> Option<usize> {
        self.lambdas.iter().position(|&l| (l - lambda).abs() <= 1e-12 * lambda)
    }

    pub fn green_offset(&self, l: usize) -> usize {
        2 * self.panel.len() * l
    }

    pub fn derivative_offset(&self, l: usize) -> usize {
        2 * self.panel.len() * l + self.panel.len()
    }

    /// Green and derivative sums of weighted points, one [`ExpPanelSums`] per λ.
    pub fn sums<I>(&self, points: I) -> Vec<ExpPanelSums>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut sums: Vec<ExpPanelSums> = self
            .lambdas
            .iter()
            .map(|&l| ExpPanelSums::new(&self.panel, (2.0 * l).sqrt()))
            .collect();
        for (y, w) in points {
            let slot = self.panel.locate(y);
            for s in sums.iter_mut() {
                s.deposit(&self.panel, slot, y, w);
            }
        }
        for s in sums.iter_mut() {
            s.finish();
        }
        sums
    }
}

impl Observable for GreenPanel {
    fn name(&self) -> String {
        format!("green_panel{:?}", self.lambdas)
    }
    fn len(&self) -> usize {
        2 * self.panel.len() * self.lambdas.len()
    }
    fn accumulate(&self, coords: &[f64], _dim: usize, weight: f64, out: &mut [f64]) {
        let sums = self.sums(coords.iter().map(|&y| (y, 1.0)));
        let p = self.panel.len();
        for (l, s) in sums.iter().enumerate() {
            let g0 = self.green_offset(l);
            let d0 = self.derivative_offset(l);
            for j in 0..p {
                out[g0 + j] += weight * s.green(j);
                out[d0 + j] += weight * s.derivative(j);
            }
        }
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Gaussian kernel k_bw(y - x_j) on a panel; its occupation integral is the
/// kernel local-time estimator.
#[derive(Clone, Debug)]
pub struct GaussianPanel {
    panel: UniformPanel,
    sums: GaussPanelSums,
}

impl GaussianPanel {
    pub fn new(panel: UniformPanel, bandwidth: f64) -> Result<Self> {
        let sums = GaussPanelSums::new(&panel, bandwidth)?;
        Ok(Self { panel, sums })
    }

    pub fn panel(&self) -> &UniformPanel {
        &self.panel
    }

    pub fn bandwidth(&self) -> f64 {
        self.sums.bandwidth()
    }
}

impl Observable for GaussianPanel {
    fn name(&self) -> String {
        format!("gauss_panel[bw={}]", self.bandwidth())
    }
    fn len(&self) -> usize {
        self.panel.len()
    }
    fn accumulate(&self, coords: &[f64], _dim: usize, weight: f64, out: &mut [f64]) {
        for &y in coords {
            self.sums.deposit(&self.panel, y, weight, out);
        }
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Particle counts in square (or interval) bins of a window, scaled by the
/// particle mass. Bins are indexed row-major with the first coordinate fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationGrid {
    dim: usize,
    lo: f64,
    width: f64,
    bins_per_axis: usize,
}

impl OccupationGrid {
    /// Window [lo, lo + bins_per_axis·width]^dim.
    pub fn new(dim: usize, lo: f64, width: f64, bins_per_axis: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return domain("occupation grid dimension must be 1 or 2");
        }
        if !(width > 0.0) || bins_per_axis == 0 {
            return domain("occupation grid needs positive width and at least one bin");
        }
        Ok(Self {
            dim,
            lo,
            width,
            bins_per_axis,
        })
    }

    pub fn spatial_dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * self.bins_per_axis as f64
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn bins_per_axis(&self) -> usize {
        self.bins_per_axis
    }

    #[inline]
    fn axis_bin(&self, x: f64) -> Option<usize> {
        let r = ((x - self.lo) / self.width).floor();
        (r >= 0.0 && (r as usize) < self.bins_per_axis).then_some(r as usize)
    }
}

impl Observable for OccupationGrid {
    fn name(&self) -> String {
        format!("occupation_grid[d={},w={}]", self.dim, self.width)
    }
    fn len(&self) -> usize {
        self.bins_per_axis.pow(self.dim as u32)
    }
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
    fn accumulate(&self, coords: &[f64], dim: usize, weight: f64, out: &mut [f64]) {
        for p in coords.chunks_exact(dim) {
            let Some(i) = self.axis_bin(p[0]) else { continue };
            if dim == 1 {
                out[i] += weight;
            } else if let Some(j) = self.axis_bin(p[1]) {
                out[j * self.bins_per_axis + i] += weight;
            }
        }
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

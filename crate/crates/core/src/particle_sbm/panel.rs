//! Uniform x-panels and fast panel sums of exponential and Gaussian kernels.

use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct UniformPanel {
    points: Vec<f64>,
    lo: f64,
    hi: f64,
    h: f64,
}

impl UniformPanel {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 2 || !lo.is_finite() || !hi.is_finite() {
            return domain(format!("panel needs lo < hi and n ≥ 2 (got {lo}, {hi}, {n})"));
        }
        let m = (n - 1) as f64;
        let points = (0..n).map(|j| lo + (hi - lo) * (j as f64 / m)).collect();
        Ok(Self {
            points,
            lo,
            hi,
            h: (hi - lo) / m,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Index of a panel point equal to `x` up to 1e-9 of the spacing.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let r = ((x - self.lo) / self.h).round();
        if r < 0.0 || r as usize >= self.points.len() {
            return None;
        }
        let j = r as usize;
        ((self.points[j] - x).abs() <= 1e-9 * self.h).then_some(j)
    }

    /// Where `y` falls: below the panel, exactly on a point, strictly between
    /// points `j` and `j+1`, or above the panel.
    #[inline]
    pub fn locate(&self, y: f64) -> Slot {
        let p = &self.points;
        let n = p.len();
        if y < p[0] {
            return Slot::Below;
        }
        if y > p[n - 1] {
            return Slot::Above;
        }
        let mut j = (((y - self.lo) / self.h).floor() as usize).min(n - 1);
        while j > 0 && p[j] > y {
            j -= 1;
        }
        while j + 1 < n && p[j + 1] <= y {
            j += 1;
        }
        if p[j] == y {
            Slot::At(j)
        } else {
            Slot::Between(j)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Below,
    At(usize),
    Between(usize),
    Above,
}

/// Scratch buffers for [`ExpPanelSums`].
#[derive(Clone, Debug)]
pub struct ExpPanelSums {
    rate: f64,
    step_decay: f64,
    /// Σ_{y < x_j} w e^{-a(x_j - y)}.
    pub left: Vec<f64>,
    /// Σ_{y > x_j} w e^{-a(y - x_j)}.
    pub right: Vec<f64>,
    /// Σ_{y = x_j} w.
    pub at: Vec<f64>,
}

impl ExpPanelSums {
    pub fn new(panel: &UniformPanel, rate: f64) -> Self {
        let n = panel.len();
        Self {
            rate,
            step_decay: (-rate * panel.spacing()).exp(),
            left: vec![0.0; n],
            right: vec![0.0; n],
            at: vec![0.0; n],
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn clear(&mut self) {
        self.left.iter_mut().for_each(|v| *v = 0.0);
        self.right.iter_mut().for_each(|v| *v = 0.0);
        self.at.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Deposits one weighted point into the bucket arrays.
    #[inline]
    pub fn deposit(&mut self, panel: &UniformPanel, slot: Slot, y: f64, w: f64) {
        let p = panel.points();
        let a = self.rate;
        match slot {
            Slot::Below => self.left[0] += w * (-a * (p[0] - y)).exp(),
            Slot::Above => {
                let n = p.len() - 1;
                self.right[n] += w * (-a * (y - p[n])).exp();
            }
            Slot::At(j) => self.at[j] += w,
            Slot::Between(j) => {
                let e = (-a * (p[j + 1] - y)).exp();
                self.left[j + 1] += w * e;
                self.right[j] += w * self.step_decay / e;
            }
        }
    }

    /// Turns bucket contributions into full sums at every panel point.
    pub fn finish(&mut self) {
        let n = self.left.len();
        let d = self.step_decay;
        for j in 1..n {
            self.left[j] += (self.left[j - 1] + self.at[j - 1]) * d;
        }
        for j in (0..n - 1).rev() {
            self.right[j] += (self.right[j + 1] + self.at[j + 1]) * d;
        }
    }

    /// Σ w G_λ(y - x_j) after [`finish`](Self::finish).
    #[inline]
    pub fn green(&self, j: usize) -> f64 {
        (self.left[j] + self.right[j] + self.at[j]) / self.rate
    }

    /// Σ w g_λ(x_j - y), the x-derivative of the Green sum away from atoms.
    #[inline]
    pub fn derivative(&self, j: usize) -> f64 {
        self.right[j] - self.left[j]
    }
}

/// Weighted sums of a Gaussian kernel of bandwidth `bw` at every panel point.
#[derive(Clone, Debug)]
pub struct GaussPanelSums {
    bw: f64,
    reach: usize,
    weights: Vec<f64>,
    norm: f64,
}

impl GaussPanelSums {
    pub fn new(panel: &UniformPanel, bw: f64) -> Result<Self> {
        if !(bw > 0.0) {
            return domain("bandwidth must be positive");
        }
        let h = panel.spacing();
        let reach = (8.0 * bw / h).ceil() as usize;
        // e^{-m²h²/(2bw²)} for the offset m from the nearest panel point.
        let weights = (0..=reach)
            .map(|m| (-0.5 * (m as f64 * h / bw).powi(2)).exp())
            .collect();
        Ok(Self {
            bw,
            reach,
            weights,
            norm: 1.0 / (bw * (2.0 * std::f64::consts::PI).sqrt()),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bw
    }

    /// Adds w·k_bw(x_j - y) for all panel points within 8 bandwidths of `y`.
    ///
    /// With c the nearest panel point and d = y - x_c, the kernel at x_{c+m}
    /// factors as e^{-d²/2bw²} · (e^{hd/bw²})^m · e^{-m²h²/2bw²}.
    #[inline]
    pub fn deposit(&self, panel: &UniformPanel, y: f64, w: f64, out: &mut [f64]) {
        let p = panel.points();
        let n = p.len() as isize;
        let h = panel.spacing();
        let c = ((y - panel.lo()) / h).round();
        if c < -(self.reach as f64) || c > (n - 1 + self.reach as isize) as f64 {
            return;
        }
        let c = c as isize;
        let xc = panel.lo() + h * c as f64;
        let d = y - xc;
        let inv2 = 1.0 / (self.bw * self.bw);
        let base = w * self.norm * (-0.5 * d * d * inv2).exp();
        let rho = (h * d * inv2).exp();
        let rho_inv = 1.0 / rho;
        if (0..n).contains(&c) {
            out[c as usize] += base;
        }
        let mut up = 1.0;
        let mut down = 1.0;
        for m in 1..=self.reach {
            up *= rho;
            down *= rho_inv;
            let k = self.weights[m] * base;
            let j = c + m as isize;
            if (0..n).contains(&j) {
                out[j as usize] += k * up;
            }
            let j = c - m as isize;
            if (0..n).contains(&j) {
                out[j as usize] += k * down;
            }
        }
    }
}

//! Finite measures on the line: atoms plus a trapezoid-integrated density.

use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::rng_stable::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMeasure {
    atoms: Vec<(f64, f64)>,
    density: Vec<(f64, f64)>,
    total_mass: f64,
    // Cumulative masses for sampling: atoms first, then density segments.
    cumulative: Vec<f64>,
}

fn strictly_increasing(points: &[(f64, f64)]) -> bool {
    points.windows(2).all(|w| w[0].0 < w[1].0)
}

impl FiniteMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, density: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |m: String| Err(LabError::Domain(m));
        if atoms.iter().any(|&(x, m)| !x.is_finite() || !(m > 0.0 && m.is_finite())) {
            return bad("atoms need finite locations and positive finite masses".into());
        }
        if density.iter().any(|&(x, v)| !x.is_finite() || !(v >= 0.0 && v.is_finite())) {
            return bad("density needs finite locations and nonnegative values".into());
        }
        if !strictly_increasing(&atoms) {
            return bad("atom locations must be strictly increasing".into());
        }
        if !strictly_increasing(&density) {
            return bad("density grid must be strictly increasing".into());
        }
        if density.len() == 1 {
            return bad("a density needs at least two grid points".into());
        }
        let mut cumulative = Vec::with_capacity(atoms.len() + density.len());
        let mut acc = 0.0;
        for &(_, m) in &atoms {
            acc += m;
            cumulative.push(acc);
        }
        for w in density.windows(2) {
            acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
            cumulative.push(acc);
        }
        Ok(Self {
            atoms,
            density,
            total_mass: acc,
            cumulative,
        })
    }

    pub fn zero() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty measure is valid")
    }

    pub fn dirac(x: f64, mass: f64) -> Result<Self> {
        Self::new(vec![(x, mass)], Vec::new())
    }

    /// Constant density `value` on `[a, b]` sampled at `points` grid nodes.
    pub fn uniform(a: f64, b: f64, value: f64, points: usize) -> Result<Self> {
        if !(b > a) || points < 2 {
            return Err(LabError::Domain("uniform density needs a < b and ≥ 2 points".into()));
        }
        let h = (b - a) / (points - 1) as f64;
        let grid = (0..points).map(|i| (a + h * i as f64, value)).collect();
        Self::new(Vec::new(), grid)
    }

    /// Sum of two measures whose atom sets and density grids combine cleanly.
    pub fn with_atoms(mut self, extra: &[(f64, f64)]) -> Result<Self> {
        self.atoms.extend_from_slice(extra);
        self.atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::new(self.atoms, self.density)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> &[(f64, f64)] {
        &self.density
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_atomless(&self) -> bool {
        self.atoms.is_empty()
    }

    /// μ({x}).
    pub fn atom_mass_at(&self, x: f64) -> f64 {
        self.atoms
            .binary_search_by(|a| a.0.total_cmp(&x))
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// ⟨μ, f⟩: atom sum plus trapezoid rule on the density grid.
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut s: f64 = self.atoms.iter().map(|&(x, m)| m * f(x)).sum();
        let mut prev: Option<(f64, f64)> = None;
        for &(x, v) in &self.density {
            let fv = v * f(x);
            if let Some((px, pf)) = prev {
                s += 0.5 * (x - px) * (pf + fv);
            }
            prev = Some((x, fv));
        }
        s
    }

    /// One point from μ / μ(ℝ). Density segments are sampled from their
    /// linear interpolant.
    pub fn sample_point(&self, stream: &mut RngStream) -> f64 {
        let u = stream.next_f64() * self.total_mass;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);
        if idx < self.atoms.len() {
            return self.atoms[idx].0;
        }
        let seg = idx - self.atoms.len();
        let (x0, v0) = self.density[seg];
        let (x1, v1) = self.density[seg + 1];
        let h = x1 - x0;
        let before = if idx == 0 { 0.0 } else { self.cumulative[idx - 1] };
        let seg_mass = self.cumulative[idx] - before;
        // Solve v0·s + (v1-v0)·s²/(2h) = target for s in [0, h].
        let target = (u - before).clamp(0.0, seg_mass);
        let slope = (v1 - v0) / h;
        let s = if slope.abs() < 1e-14 * (v0.abs() + v1.abs() + 1e-300) {
            if v0 > 0.0 {
                target / v0
            } else {
                h * stream.next_f64()
            }
        } else {
            let disc = (v0 * v0 + 2.0 * slope * target).max(0.0);
            // Numerically stable root of the quadratic.
            2.0 * target / (v0 + disc.sqrt())
        };
        x0 + s.clamp(0.0, h)
    }
}

impl fmt::Display for FiniteMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "atoms {}", self.atoms.len())?;
        for &(x, m) in &self.atoms {
            writeln!(f, "{x:e} {m:e}")?;
        }
        writeln!(f, "density {}", self.density.len())?;
        for &(x, v) in &self.density {
            writeln!(f, "{x:e} {v:e}")?;
        }
        Ok(())
    }
}

impl FromStr for FiniteMeasure {
    type Err = LabError;

    /// Reads `atoms n` followed by n `location mass` lines, then an optional
    /// `density m` block of `location value` lines. `#` starts a comment.
    fn from_str(s: &str) -> Result<Self> {
        let perr = |line: usize, m: &str| LabError::Parse(format!("measure line {line}: {m}"));
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut read_block = |name: &str, required: bool| -> Result<Vec<(f64, f64)>> {
            let Some((ln, header)) = lines.next() else {
                return if required {
                    Err(LabError::Parse(format!("missing `{name}` header")))
                } else {
                    Ok(Vec::new())
                };
            };
            let mut parts = header.split_whitespace();
            if parts.next() != Some(name) {
                return Err(perr(ln, &format!("expected `{name} <count>`")));
            }
            let count: usize = parts
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| perr(ln, "bad count"))?;
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, l) = lines
                    .next()
                    .ok_or_else(|| LabError::Parse(format!("`{name}` block ended early")))?;
                let vals: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| perr(ln, &e.to_string()))?;
                if vals.len() != 2 {
                    return Err(perr(ln, "expected two numbers"));
                }
                out.push((vals[0], vals[1]));
            }
            Ok(out)
        };
        let atoms = read_block("atoms", true)?;
        let density = read_block("density", false)?;
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content"));
        }
        FiniteMeasure::new(atoms, density)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_text() {
        let mu = FiniteMeasure::new(vec![(0.0, 1.0), (0.5, 0.25)], vec![(-1.0, 0.0), (0.0, 2.0), (1.0, 0.5)])
            .unwrap();
        let back: FiniteMeasure = mu.to_string().parse().unwrap();
        assert_eq!(mu, back);
    }

    #[test]
    fn parse_with_comments_and_no_density() {
        let mu: FiniteMeasure = "# start\natoms 1\n0 1 # unit atom\n".parse().unwrap();
        assert_eq!(mu.total_mass(), 1.0);
        assert!("atoms 2\n0 1\n".parse::<FiniteMeasure>().is_err());
        assert!("atoms 1\n1 1\ndensity 2\n0 1\n".parse::<FiniteMeasure>().is_err());
    }

    #[test]
    fn rejects_unsorted_and_negative() {
        assert!(FiniteMeasure::new(vec![(1.0, 1.0), (0.0, 1.0)], vec![]).is_err());
        assert!(FiniteMeasure::new(vec![(1.0, -1.0)], vec![]).is_err());
        assert!(FiniteMeasure::new(vec![], vec![(0.0, -1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn apply_constants_and_linear() {
        let mu = FiniteMeasure::uniform(0.0, 1.0, 1.0, 101).unwrap();
        assert!((mu.apply(|x| x) - 0.5).abs() < 1e-12);
        let nu = FiniteMeasure::new(vec![(0.3, 2.0)], vec![(0.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!((nu.apply(|_| 3.0) - 3.0 * nu.total_mass()).abs() < 1e-12);
        assert_eq!(nu.total_mass(), 4.0);
    }

    #[test]
    fn sampling_follows_linear_density() {
        // Density 2x on [0,1]: CDF x².
        let mu = FiniteMeasure::new(vec![], vec![(0.0, 0.0), (1.0, 2.0)]).unwrap();
        let mut s = RngStream::new(9, 0);
        let n = 20_000;
        let below_half = (0..n).filter(|_| mu.sample_point(&mut s) < 0.5).count() as f64 / n as f64;
        assert!((below_half - 0.25).abs() < 0.01);
    }
}

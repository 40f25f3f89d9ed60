//! Slack offspring law with generating function `s + (1-s)^(1+β)/(1+β)`.
//!
//! Writing α = 1+β, the law has p_0 = 1/α, p_1 = 0 and for k ≥ 2
//! p_k = (-1)^k binom(α,k)/α. Its survival function is
//! P(K > k) = |binom(β,k)|/α for k ≥ 1, which decays like k^(-1-β).

use super::stream::RngStream;
use crate::error::{check_beta, Result};

pub const DEFAULT_TABLE_SIZE: usize = 10_000;

#[derive(Clone, Debug)]
pub struct OffspringLaw {
    beta: f64,
    /// p_k for 0 ≤ k ≤ k_table.
    pmf: Vec<f64>,
    /// P(K > k) for 0 ≤ k ≤ k_table (decreasing).
    tail: Vec<f64>,
    /// |binom(β, k_table)|.
    b_last: f64,
    /// Σ_{k > k_table} |binom(β, k)| = (-1)^k_table binom(β-1, k_table).
    e_last: f64,
}

impl OffspringLaw {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_table_size(beta, DEFAULT_TABLE_SIZE)
    }

    pub fn with_table_size(beta: f64, k_table: usize) -> Result<Self> {
        check_beta(beta)?;
        if k_table < 2 {
            return crate::error::domain("offspring table needs at least k = 2");
        }
        let alpha = 1.0 + beta;
        let mut pmf = vec![0.0; k_table + 1];
        let mut tail = vec![0.0; k_table + 1];
        pmf[0] = 1.0 / alpha;
        tail[0] = beta / alpha;
        // a_k = (-1)^k binom(α,k); b_k = |binom(β,k)|; e_k = (-1)^k binom(β-1,k).
        let mut a = -alpha;
        let mut b = beta;
        let mut e = 1.0 - beta;
        tail[1] = b / alpha;
        for k in 2..=k_table {
            let kf = k as f64;
            a *= (kf - 1.0 - alpha) / kf;
            b *= (kf - 1.0 - beta) / kf;
            e *= (kf - beta) / kf;
            pmf[k] = a / alpha;
            tail[k] = b / alpha;
        }
        Ok(Self {
            beta,
            pmf,
            tail,
            b_last: b,
            e_last: e,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k_table(&self) -> usize {
        self.pmf.len() - 1
    }

    /// Tail index of the pmf: p_k ~ c k^(-tail_index).
    pub fn tail_index(&self) -> f64 {
        2.0 + self.beta
    }

    /// Constant c in P(K > k) ~ c k^(-1-β).
    pub fn tail_constant(&self) -> f64 {
        self.beta / (statrs::function::gamma::gamma(1.0 - self.beta) * (1.0 + self.beta))
    }

    pub fn pmf_table(&self) -> &[f64] {
        &self.pmf
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if (k as usize) < self.pmf.len() {
            self.pmf[k as usize]
        } else {
            self.survival(k - 1) - self.survival(k)
        }
    }

    /// P(K > k).
    pub fn survival(&self, k: u64) -> f64 {
        if (k as usize) < self.tail.len() {
            self.tail[k as usize]
        } else {
            self.tail_asymptotic(k as f64)
        }
    }

    /// Total probability mass beyond the table.
    pub fn mass_beyond_table(&self) -> f64 {
        self.tail[self.k_table()]
    }

    /// Σ_{k > k_table} k p_k, in closed form.
    pub fn mean_beyond_table(&self) -> f64 {
        let kt = self.k_table() as f64;
        let alpha = 1.0 + self.beta;
        kt * self.tail[self.k_table()] + (self.b_last + self.e_last) / alpha
    }

    /// Table mass plus the analytic tail mass.
    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.mass_beyond_table()
    }

    /// Table mean plus the analytic tail mean.
    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum::<f64>()
            + self.mean_beyond_table()
    }

    // Γ(k-β)/Γ(k+1) ≈ k^(-1-β) (1 + c1/k + c2/k²), anchored to the last table entry.
    fn tail_asymptotic(&self, k: f64) -> f64 {
        let kt = self.k_table() as f64;
        self.tail[self.k_table()] * self.asym_shape(k) / self.asym_shape(kt)
    }

    fn asym_shape(&self, k: f64) -> f64 {
        let b = self.beta;
        let rho = -1.0 - b;
        let c1 = b * (1.0 + b) / 2.0;
        let c2 = rho * (rho - 1.0) * (3.0 * b * b + b) / 24.0;
        k.powf(rho) * (1.0 + c1 / k + c2 / (k * k))
    }

    /// Inverse-CDF draw: the smallest k with P(K > k) ≤ U.
    pub fn sample(&self, stream: &mut RngStream) -> u64 {
        let u = stream.next_open01();
        self.quantile_of_survival(u)
    }

    /// Smallest k with P(K > k) ≤ u, for u in (0, 1).
    pub fn quantile_of_survival(&self, u: f64) -> u64 {
        if u >= self.tail[0] {
            return 0;
        }
        let kt = self.k_table();
        if u >= self.tail[kt] {
            return self.tail.partition_point(|&t| t > u) as u64;
        }
        // Power-law guess, then integer bisection on the asymptotic survival.
        let guess = kt as f64 * (self.tail[kt] / u).powf(1.0 / (1.0 + self.beta));
        let mut lo = kt as f64;
        let mut hi = (guess * 1.5).max(lo + 1.0).ceil();
        while self.tail_asymptotic(hi) > u {
            lo = hi;
            hi *= 2.0;
        }
        // Invariant: survival(lo) > u ≥ survival(hi).
        while hi - lo > 1.0 {
            let mid = ((lo + hi) * 0.5).floor();
            if self.tail_asymptotic(mid) > u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi.min(u64::MAX as f64) as u64
    }
}

/// Coefficient of s^k in the Slack generating function.
pub fn offspring_pmf(beta: f64, k: u64) -> Result<f64> {
    check_beta(beta)?;
    let alpha = 1.0 + beta;
    Ok(match k {
        0 => 1.0 / alpha,
        1 => 0.0,
        _ => {
            let mut a = alpha * (alpha - 1.0) / 2.0;
            for j in 3..=k {
                let jf = j as f64;
                a *= (jf - 1.0 - alpha) / jf;
            }
            a / alpha
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    // p_k = β Γ(k-1-β) / (Γ(1-β) Γ(k+1)) for k ≥ 2, evaluated through log-gamma.
    fn pmf_oracle(beta: f64, k: u64) -> f64 {
        let k = k as f64;
        beta * (ln_gamma(k - 1.0 - beta) - ln_gamma(1.0 - beta) - ln_gamma(k + 1.0)).exp()
    }

    #[test]
    fn small_k_values() {
        assert!((offspring_pmf(0.5, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(offspring_pmf(0.5, 1).unwrap(), 0.0);
        assert!((offspring_pmf(0.5, 2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_beta() {
        assert!(offspring_pmf(1.0, 0).is_err());
        assert!(offspring_pmf(0.0, 0).is_err());
        assert!(OffspringLaw::new(-0.3).is_err());
    }

    #[test]
    fn matches_log_gamma_form() {
        for &beta in &[0.1, 0.5, 0.9] {
            let law = OffspringLaw::new(beta).unwrap();
            for &k in &[2u64, 3, 10, 137, 5000, 10_000] {
                let rel = (law.pmf(k) / pmf_oracle(beta, k) - 1.0).abs();
                assert!(rel < 1e-9, "beta {beta} k {k} rel {rel}");
            }
        }
    }

    #[test]
    fn asymptotic_tail_continuous_and_accurate() {
        for &beta in &[0.1, 0.5, 0.9] {
            let law = OffspringLaw::new(beta).unwrap();
            // Exact survival |binom(β,k)|/α through log-gamma.
            let exact = |k: f64| {
                beta / (1.0 + beta)
                    * (ln_gamma(k - beta) - ln_gamma(1.0 - beta) - ln_gamma(k + 1.0)).exp()
            };
            for &k in &[10_001.0, 20_000.0, 1e5, 1e6] {
                let rel = (law.survival(k as u64) / exact(k) - 1.0).abs();
                assert!(rel < 1e-7, "beta {beta} k {k} rel {rel}");
            }
        }
    }

    #[test]
    fn normalized_and_critical() {
        for &beta in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let law = OffspringLaw::new(beta).unwrap();
            assert!((law.total_mass() - 1.0).abs() < 1e-12);
            assert!((law.mean() - 1.0).abs() < 1e-10, "beta {beta}: {}", law.mean());
            assert!(law.pmf_table().iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn quantile_matches_survival() {
        let law = OffspringLaw::new(0.5).unwrap();
        for &u in &[0.5, 0.3, 0.01, 1e-4, 1e-7, 1e-12] {
            let k = law.quantile_of_survival(u);
            assert!(law.survival(k) <= u);
            if k > 0 {
                assert!(law.survival(k - 1) > u);
            }
        }
    }
}

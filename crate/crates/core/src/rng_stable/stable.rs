//! Spectrally positive α-stable increments, 1 < α < 2.
//!
//! Normalization: an increment X over duration t satisfies
//! E[exp(-θX)] = exp(t · scale · θ^α) for θ ≥ 0.

use std::f64::consts::FRAC_PI_2;

use rand_distr::{Distribution, Exp1};

use super::stream::RngStream;
use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableParams {
    alpha: f64,
    scale: f64,
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return domain(format!("stable index must lie in (1,2), got {alpha}"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return domain(format!("stable scale must be positive, got {scale}"));
        }
        Ok(Self { alpha, scale })
    }

    /// Index 1+β with unit Laplace-exponent scale.
    pub fn from_beta(beta: f64) -> Result<Self> {
        crate::error::check_beta(beta)?;
        Self::new(1.0 + beta, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Only upward jumps are produced.
    pub fn positive_jumps_only(&self) -> bool {
        true
    }

    /// log E[exp(-θ X_t)] = t · scale · θ^α.
    pub fn laplace_exponent(&self, theta: f64) -> f64 {
        self.scale * theta.powf(self.alpha)
    }
}

/// Precomputed constants of the Chambers–Mallows–Stuck map for skewness 1.
#[derive(Clone, Copy, Debug)]
pub struct StableSampler {
    params: StableParams,
    b: f64,
    s: f64,
    cos_factor: f64,
}

impl StableSampler {
    pub fn new(params: StableParams) -> Self {
        let a = params.alpha;
        let tan = (FRAC_PI_2 * a).tan();
        Self {
            params,
            b: tan.atan() / a,
            s: (1.0 + tan * tan).powf(0.5 / a),
            cos_factor: (FRAC_PI_2 * a).cos().abs(),
        }
    }

    pub fn params(&self) -> StableParams {
        self.params
    }

    /// Standard S_α(1, 1, 0) variate.
    #[inline]
    pub fn standard(&self, stream: &mut RngStream) -> f64 {
        let a = self.params.alpha;
        let v = std::f64::consts::PI * (stream.next_open01() - 0.5);
        let w: f64 = Exp1.sample(stream);
        let av = a * (v + self.b);
        self.s * av.sin() / v.cos().powf(1.0 / a) * ((v - av).cos() / w).powf((1.0 - a) / a)
    }

    /// σ = (t · scale · |cos(πα/2)|)^(1/α) turns S_α(1,1,0) into the increment over t.
    #[inline]
    pub fn increment_scale(&self, duration: f64) -> f64 {
        (duration * self.params.scale * self.cos_factor).powf(1.0 / self.params.alpha)
    }

    #[inline]
    pub fn increment(&self, stream: &mut RngStream, duration: f64) -> f64 {
        self.increment_scale(duration) * self.standard(stream)
    }
}

pub fn sample_stable_increment(
    stream: &mut RngStream,
    params: StableParams,
    duration: f64,
) -> Result<f64> {
    if !(duration > 0.0) {
        return domain(format!("duration must be positive, got {duration}"));
    }
    Ok(StableSampler::new(params).increment(stream, duration))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_mc(theta: f64, t: f64, n: usize, seed: u64) -> (f64, f64) {
        let p = StableParams::from_beta(0.5).unwrap();
        let sampler = StableSampler::new(p);
        let mut s = RngStream::new(seed, 0);
        let (mut m, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let y = (-theta * sampler.increment(&mut s, t)).exp();
            m += y;
            m2 += y * y;
        }
        let mean = m / n as f64;
        let var = (m2 / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn laplace_normalization() {
        let (m, se) = laplace_mc(1.0, 0.5, 100_000, 11);
        assert!((m - 0.5f64.exp()).abs() < 3.0 * se, "{m} vs {} se {se}", 0.5f64.exp());
    }

    #[test]
    fn laplace_grid() {
        for (i, &theta) in [0.5, 1.0, 2.0].iter().enumerate() {
            for (j, &t) in [0.1, 1.0].iter().enumerate() {
                let (m, se) = laplace_mc(theta, t, 100_000, 100 + (3 * i + j) as u64);
                let expect = (t * theta.powf(1.5)).exp();
                assert!((m - expect).abs() < 3.0 * se, "theta {theta} t {t}: {m} vs {expect}");
            }
        }
    }

    #[test]
    fn small_duration_near_zero() {
        let (m, se) = laplace_mc(1.0, 1e-8, 20_000, 3);
        assert!((m - 1.0).abs() < 3.0 * se + 1e-4);
    }

    #[test]
    fn rejects_nonpositive_duration() {
        let p = StableParams::from_beta(0.5).unwrap();
        let mut s = RngStream::new(0, 0);
        assert!(sample_stable_increment(&mut s, p, 0.0).is_err());
        assert!(StableParams::new(2.0, 1.0).is_err());
    }
}

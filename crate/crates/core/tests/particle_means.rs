use std::sync::Arc;

use proptest::prelude::*;
use sbmlab_core::kernels_green::{green_closed, measure_semigroup, occupation_mean, FiniteMeasure};
use sbmlab_core::particle_sbm::*;
use sbmlab_core::rng_stable::RngStream;
use sbmlab_core::stats::Moments;

fn bump(x: f64) -> f64 {
    (-x * x).exp()
}

#[test]
fn mean_instant_and_occupation_match_heat_flow() {
    let mu = FiniteMeasure::dirac(0.0, 1.0).unwrap();
    let t = 0.25;
    let params = ModelParams::new(0.5, 200, 1, t);
    let obs: Vec<SharedObservable> = vec![Arc::new(ScalarFn::new("bump", bump))];
    let (mut inst, mut occ) = (Moments::new(), Moments::new());
    for r in 0..400 {
        let rec = simulate(&mu, &params, &obs, &mut RngStream::new(31, r)).unwrap();
        inst.push(rec.instant(0, t).unwrap()[0]);
        occ.push(rec.occupation(0, t).unwrap()[0]);
    }
    let exact_inst = measure_semigroup(&mu, t, bump, &[]).unwrap();
    let exact_occ = occupation_mean(&mu, t, bump, &[]).unwrap();
    assert!((inst.mean() - exact_inst).abs() < 3.0 * inst.se(), "{} vs {exact_inst}", inst.mean());
    assert!((occ.mean() - exact_occ).abs() < 3.0 * occ.se(), "{} vs {exact_occ}", occ.mean());
}

// k - 1 has infinite variance, and so does X_s, so the check uses the capped
// event sum minus its realized compensator p·E[min(k-1, c)]·Σ_k X_{t_k}(G).
// Both pieces have finite variance. Using G instead of P_dt G in the
// compensator costs O(dt) relative bias, far below the standard error.
#[test]
fn capped_green_martingale_matches_compensation() {
    use sbmlab_core::rng_stable::OffspringLaw;
    let mu = FiniteMeasure::dirac(0.0, 1.0).unwrap();
    let t = 0.3;
    let params = ModelParams::new(0.5, 300, 1, t);
    let law = OffspringLaw::new(0.5).unwrap();
    let cap = 20u64;
    let shift: f64 = (0..=cap).map(|k| (k as f64 - 1.0) * law.pmf(k)).sum::<f64>() + cap as f64 * law.survival(cap);
    let g = |y: f64| green_closed(1.0, y - 0.25);
    let obs: Vec<SharedObservable> = vec![Arc::new(ScalarFn::new("green", g))];
    let dt = params.effective_dt();
    let p = params.branch_rate() * dt;
    let mut m = Moments::new();
    for r in 0..600 {
        let rec = simulate(&mu, &params, &obs, &mut RngStream::new(32, r)).unwrap();
        let capped: f64 = rec
            .events()
            .iter()
            .map(|e| g(e.location[0]) * (e.offspring as i64 - 1).min(cap as i64) as f64 / 300.0)
            .sum();
        let (i0, it) = (rec.instant(0, 0.0).unwrap()[0], rec.instant(0, t).unwrap()[0]);
        let left_sum = rec.occupation(0, t).unwrap()[0] / dt + 0.5 * (i0 - it);
        m.push(capped - shift * p * left_sum);
    }
    assert!(m.mean().abs() < 3.0 * m.se(), "{} ± {}", m.mean(), m.se());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn displacement_variance_is_dt(seed in 0u64..1_000_000, dt in 1e-5f64..1e-3) {
        let params = ModelParams::new(0.5, 4000, 1, 1.0).with_dt(dt);
        let mu = FiniteMeasure::dirac(0.0, 1.0).unwrap();
        let mut stream = RngStream::new(seed, 0);
        let mut state = init_particles(&mu, &params, &mut stream).unwrap();
        let mut stepper = Stepper::with_rate(&params, 0.0).unwrap();
        let mut ev = EventLog::new(1);
        stepper.step(&mut state, &mut stream, &mut ev).unwrap();
        let m = Moments::from_slice(&state.coords);
        let h = params.effective_dt();
        // sample variance of 4000 normals: relative sd ≈ 0.022
        prop_assert!((m.variance() / h - 1.0).abs() < 0.12);
        prop_assert!(ev.is_empty());
    }

    #[test]
    fn net_offspring_mean_is_zero(beta in 0.2f64..0.8, seed in 0u64..1_000_000) {
        // criticality: mean of (k - 1) over many draws is 0 up to heavy-tail noise
        let law = sbmlab_core::rng_stable::OffspringLaw::new(beta).unwrap();
        let mut s = RngStream::new(seed, 1);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut s) as f64 - 1.0).collect();
        let trimmed: f64 = draws.iter().map(|&d| d.min(1e3)).sum::<f64>() / n as f64;
        // truncation at 1e3 removes mean ≈ 1e3^{-β}/(β(1+β))·(1+β)... bounded by 0.3 for β ≥ 0.2
        prop_assert!(trimmed < 0.3 && trimmed > -0.5);
    }
}


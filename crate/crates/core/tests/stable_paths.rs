use sbmlab_core::rng_stable::RngStream;
use sbmlab_core::stable_path::*;
use sbmlab_core::stats::Moments;

#[test]
fn endpoint_laplace_transform() {
    let mut m = Moments::new();
    for r in 0..100_000u64 {
        let p = simulate_stable_path(&mut RngStream::new(11, r), 0.5, 1.0, 0.1).unwrap();
        m.push((-p.end()).exp());
    }
    let e = 1f64.exp();
    assert!((m.mean() - e).abs() < 3.0 * m.se(), "{} ± {} vs {e}", m.mean(), m.se());
}

#[test]
fn paths_dip_below_zero() {
    let n = 2000;
    let neg = (0..n)
        .filter(|&r| {
            simulate_stable_path(&mut RngStream::new(12, r as u64), 0.5, 1.0, 0.001)
                .unwrap()
                .running_min()
                < 0.0
        })
        .count();
    assert!(neg as f64 / n as f64 > 0.5);
}

// Without negative jumps the passage time below -x is a positive stable law
// with E e^{-q τ_x} = e^{-x q^{1/α}}; P(inf_{u≤1} L_u < -x) = P(τ_1 < x^{-α}),
// evaluated by numerical Laplace inversion of e^{-q^{2/3}}/q at β = 0.5.
const EXACT_INF_TAIL: [(f64, f64); 3] = [(1.0, 0.526_258_848), (2.0, 0.108_460_666), (3.0, 0.004_072_611)];

#[test]
fn infimum_tail_matches_passage_time_law() {
    let replicas = 20_000;
    let xs: Vec<f64> = EXACT_INF_TAIL.iter().map(|p| p.0).collect();
    let ps = inf_tail_curve(0.5, 1.0, &xs, replicas, 13).unwrap();
    for ((_, exact), p) in EXACT_INF_TAIL.iter().zip(&ps) {
        let se = (exact * (1.0 - exact) / replicas as f64).sqrt();
        // grid monitoring misses part of each downward excursion
        assert!(p <= &(exact + 3.0 * se) && *p >= exact - 3.0 * se - 0.02 * exact.max(0.1), "{p} vs {exact}");
    }
}

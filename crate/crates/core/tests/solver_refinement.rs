use sbmlab_core::loglaplace_solver::{solve_mild, Grid1d, SolverConfig};

fn bump(x: f64) -> f64 {
    (-x * x).exp()
}

fn solve_at(dx: f64, steps: usize) -> (Grid1d, Vec<f64>) {
    let g = Grid1d::with_spacing(-8.0, 8.0, dx).unwrap();
    let s = solve_mild(&g.sample(bump), &g, &SolverConfig::new(0.5, 1.0, steps)).unwrap();
    (g, s.final_values().to_vec())
}

// Three levels with dx and dt halved each time. For a second-order scheme
// the error of the middle level is about d1/3; the finest change has to
// stay within four times that.
#[test]
fn halving_dx_and_dt_is_cauchy() {
    let (g0, v0) = solve_at(0.08, 25);
    let (g1, v1) = solve_at(0.04, 50);
    let (g2, v2) = solve_at(0.02, 100);
    let probes: Vec<f64> = (-30..=30).map(|i| 0.1 * i as f64).collect();
    let sup = |ga: &Grid1d, a: &[f64], gb: &Grid1d, b: &[f64]| {
        probes
            .iter()
            .map(|&x| (ga.interpolate(a, x) - gb.interpolate(b, x)).abs())
            .fold(0.0, f64::max)
    };
    let d1 = sup(&g0, &v0, &g1, &v1);
    let d2 = sup(&g1, &v1, &g2, &v2);
    assert!(d1 > 0.0);
    assert!(d2 <= 4.0 * d1 / 3.0, "d1 {d1} d2 {d2}");
    assert!(d2 < d1, "d1 {d1} d2 {d2}");
}

use proptest::prelude::*;

use smoothfix::closed_forms::{reference_examples, AnalyticSolution, Example};
use smoothfix::fixed_point::{DepthLaplace, FixedPointSolver, SolverConfig};
use smoothfix::OffspringLaw;

fn solver(sol: &AnalyticSolution) -> FixedPointSolver {
    FixedPointSolver::new(sol.offspring(), sol.alpha(), SolverConfig::default()).unwrap()
}

#[test]
fn solver_tracks_closed_forms_beyond_grid() {
    for ex in reference_examples() {
        let sol = AnalyticSolution::new(ex).unwrap();
        let s = solver(&sol);
        for t in [1e-6, 1e-3, 50.0, 1e3, 1e5] {
            let diff = (s.g(t).unwrap() - sol.g(t)).abs();
            assert!(diff < 1e-7, "{ex} t={t}: {diff}");
        }
    }
}

#[test]
fn second_moment_from_curvature() {
    // E Y² = g''(0); compare the closed form with a central difference of the
    // printed g around a small positive t.
    let sol = AnalyticSolution::new(Example::Two { rho: 0.9, alpha: 1.0 }).unwrap();
    let h = 1e-3;
    let t = 2.0 * h;
    let g2 = (sol.g(t + h) - 2.0 * sol.g(t) + sol.g(t - h)) / (h * h);
    let g3 = (sol.g(t + 2.0 * h) - 3.0 * sol.g(t + h) + 3.0 * sol.g(t) - sol.g(t - h)) / h.powi(3);
    let at_zero = g2 - t * g3;
    assert!((at_zero - sol.second_moment_formula()).abs() < 1e-3, "{at_zero}");
    assert!((sol.second_moment_formula() - 1.805_555_555_555_555_6).abs() < 1e-12);
}

#[test]
fn depth_transform_converges_to_solver() {
    let off = OffspringLaw::geometric(0.75).unwrap();
    let alpha = 2.0 / 3.0;
    let s = FixedPointSolver::new(&off, alpha, SolverConfig::default()).unwrap();
    let mut prev = f64::INFINITY;
    for depth in [4, 8, 16, 32] {
        let d = DepthLaplace::new(&off, alpha, depth, 20.0).unwrap();
        let err = [0.5, 2.0, 10.0]
            .iter()
            .map(|&t| (d.eval(t) - s.g(t).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < prev, "depth {depth}: {err} ≥ {prev}");
        prev = err;
    }
    assert!(prev < 1e-4, "{prev}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn u_decreasing_and_bounded(p in 0.67f64..0.95, t1 in 0.0f64..50.0, dt in 1e-3f64..50.0) {
        let sol = AnalyticSolution::new(Example::Four { p }).unwrap();
        let s = solver(&sol);
        let (u1, u2) = (s.solve_u(t1).unwrap(), s.solve_u(t1 + dt).unwrap());
        prop_assert!(u2 < u1);
        prop_assert!(u2 > s.lower_limit() && u1 <= 1.0);
        let (g1, g2) = (s.g(t1).unwrap(), s.g(t1 + dt).unwrap());
        prop_assert!(g2 < g1 && g2 > s.beta());
    }

    #[test]
    fn pmf_law_residuals_small(a in 0.05f64..1.0, c in 0.05f64..1.0, alpha in 0.75f64..1.0, t in 0.01f64..20.0) {
        // N ∈ {0, 1, 3} keeps b > 1 and αb > 1 over the sampled range.
        let (p0, p1) = (a * 0.2, c * 0.3);
        let off = OffspringLaw::pmf(vec![p0, p1, 0.0, 1.0 - p0 - p1]).unwrap();
        prop_assume!(alpha * off.mean() > 1.2);
        let s = FixedPointSolver::new(&off, alpha, SolverConfig::default()).unwrap();
        let r = s.laplace_residual(t).unwrap();
        prop_assert!(r < 1e-8, "residual {}", r);
    }
}

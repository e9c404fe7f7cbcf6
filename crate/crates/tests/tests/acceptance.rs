//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL: ...` line; run with `--nocapture` to see them.

use std::time::Instant;

use smoothfix::cascade::{
    batch_stats, encode_binary, iterate_pool, simulate_tree, write_binary, CascadeSpec, Method, SampleBatch,
};
use smoothfix::closed_forms::{non_injectivity_witness, reference_examples, AnalyticSolution, Example};
use smoothfix::fixed_point::{
    extinction_beta, functional_residual, g_of_t, FixedPointSolver, SolverConfig,
};
use smoothfix::verify::{compare_laplace, compare_laplace_batches, default_grid, sentinels};
use smoothfix::WeightLaw;
use smoothfix_tests::{log_grid, secs, verdict};

const SEED: u64 = 20_240_601;

// Criterion 1
const PGF_TOL: f64 = 1e-12;
const FUNCTIONAL_TOL: f64 = 1e-8;
const C1_SECONDS: f64 = 5.0;
// Criterion 2
const SOLVER_TOL: f64 = 1e-7;
const C2_SECONDS: f64 = 30.0;
// Criterion 3
const BETA_TOL: f64 = 1e-12;
// Criterion 4
const POOL_SIZE: usize = 200_000;
const POOL_ITERATIONS: usize = 50;
const LAPLACE_CAP: f64 = 0.005;
const Z_GATE: f64 = 5.0;
const ZERO_FRACTION_TOL: f64 = 0.01;
const C4_SECONDS: f64 = 60.0;
// Criterion 5
const TREE_DEPTH: u32 = 12;
const TREE_SAMPLES: usize = 100_000;
// Criterion 6
const SLOPE_REL_TOL: f64 = 1e-5;
const ODE_TOL: f64 = 1e-6;
// Criterion 7
const WITNESS_EMPIRICAL_TOL: f64 = 0.01;
// Criterion 8
const MASS_TOL: f64 = 1e-8;
const DENSITY_LAPLACE_TOL: f64 = 1e-7;

fn grid20() -> Vec<f64> {
    log_grid(0.01, 20.0, 20)
}

fn solution(ex: Example) -> AnalyticSolution {
    AnalyticSolution::new(ex).unwrap()
}

fn pool_spec(sol: &AnalyticSolution) -> smoothfix::Result<CascadeSpec> {
    let w = WeightLaw::new(sol.alpha(), sol.b())?;
    let m = Method::Pool {
        pool_size: POOL_SIZE,
        iterations: POOL_ITERATIONS,
    };
    CascadeSpec::new(sol.offspring().clone(), w, m, SEED, 1)
}

#[test]
fn criterion_01_closed_form_consistency() {
    let start = Instant::now();
    let (mut worst_pgf, mut worst_res) = (0.0f64, 0.0f64);
    for ex in reference_examples() {
        let sol = solution(ex);
        let g = |t: f64| sol.g(t);
        for t in grid20() {
            worst_pgf = worst_pgf.max((sol.offspring().pgf(sol.u(t)).unwrap() - sol.g(t)).abs());
            let r = functional_residual(sol.offspring(), sol.alpha(), &g, t, 1e-13).unwrap();
            worst_res = worst_res.max(r);
        }
    }
    let elapsed = secs(start.elapsed());
    verdict(
        1,
        worst_pgf <= PGF_TOL && worst_res <= FUNCTIONAL_TOL && elapsed < C1_SECONDS,
        &format!(
            "max |φ(u)−g| = {worst_pgf:.2e} (≤ {PGF_TOL:e}), max functional residual = {worst_res:.2e} (≤ {FUNCTIONAL_TOL:e}), {elapsed:.2} s (< {C1_SECONDS} s)"
        ),
    );
}

#[test]
fn criterion_02_solver_matches_closed_forms() {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    for ex in reference_examples() {
        let sol = solution(ex);
        for t in grid20() {
            let g = g_of_t(sol.offspring(), sol.alpha(), t, SolverConfig::default()).unwrap();
            let d = (g - sol.g(t)).abs();
            if d > worst.0 {
                worst = (d, format!("{ex} at t = {t:.3}"));
            }
        }
    }
    let elapsed = secs(start.elapsed());
    verdict(
        2,
        worst.0 <= SOLVER_TOL && elapsed < C2_SECONDS,
        &format!(
            "max |g_solver − g| = {:.2e} ({}) ≤ {SOLVER_TOL:e}, {elapsed:.2} s (< {C2_SECONDS} s)",
            worst.0, worst.1
        ),
    );
}

#[test]
fn criterion_03_extinction() {
    let mut pass = true;
    let mut lines = Vec::new();
    for ex in reference_examples() {
        let sol = solution(ex);
        let beta = extinction_beta(sol.offspring(), sol.alpha()).unwrap();
        let printed = match ex {
            Example::One { .. } | Example::Three { .. } => 0.0,
            Example::Two { rho, alpha } => 1.0 - (2.0 * alpha * rho - 1.0) / (rho * alpha * alpha),
            Example::Four { .. } => 0.5,
            Example::Five { p } => (2.0 * p - 1.0) / (2.0 * p),
            Example::Six { p } => (2.0 * p - 1.0).powi(2) / (2.0 * p * p),
        };
        let ok = match ex {
            Example::One { .. } => beta == 0.0,
            _ => (beta - printed).abs() <= BETA_TOL,
        };
        pass &= ok;
        lines.push(format!("{ex}: {:.1e}", (beta - printed).abs()));
    }
    verdict(3, pass, &format!("|β − printed| per case: {}", lines.join("; ")));
}

fn pool_agreement(sol: &AnalyticSolution) -> (bool, String) {
    let start = Instant::now();
    let spec = pool_spec(sol).unwrap();
    let batch = iterate_pool(&spec).unwrap();
    let grid = default_grid();
    let lap = compare_laplace(&batch, &|t| sol.g(t), &grid, LAPLACE_CAP).unwrap();
    let s = batch_stats(&batch, &[]).unwrap();
    let target = sol.second_moment_formula();
    let zm = (s.mean - 1.0).abs() / s.mean_se;
    let z2 = (s.second_moment - target).abs() / s.second_moment_se;
    let dz = (s.zero_fraction - sol.beta()).abs();
    let elapsed = secs(start.elapsed());
    let pass = lap.statistic <= LAPLACE_CAP
        && zm <= Z_GATE
        && z2 <= Z_GATE
        && dz <= ZERO_FRACTION_TOL
        && elapsed < C4_SECONDS;
    (
        pass,
        format!(
            "{}: sup|ĝ−g| = {:.2e}, mean z = {zm:.2}, E Y² {:.4} vs {target:.4} (z = {z2:.2}), zero fraction off by {dz:.1e}, {elapsed:.1} s",
            sol.example(),
            lap.statistic,
            s.second_moment
        ),
    )
}

#[test]
fn criterion_04_monte_carlo_agreement() {
    let (p1, d1) = pool_agreement(&solution(Example::One { n: 1 }));
    let (p4, d4) = pool_agreement(&solution(Example::Four { p: 0.75 }));
    verdict(4, p1 && p4, &format!("{d1}; {d4}"));
}

#[test]
fn criterion_05_tree_pool_cross_check() {
    let sol = solution(Example::One { n: 1 });
    let w = WeightLaw::new(sol.alpha(), sol.b()).unwrap();
    let tree = CascadeSpec::new(sol.offspring().clone(), w, Method::Tree { depth: TREE_DEPTH }, SEED, 1).unwrap();
    let tb = simulate_tree(&tree, TREE_SAMPLES).unwrap();
    let pb = iterate_pool(&pool_spec(&sol).unwrap()).unwrap();
    let rec = compare_laplace_batches(&tb, &pb, &default_grid(), f64::INFINITY).unwrap();
    verdict(
        5,
        rec.pass,
        &format!(
            "sup|ĝ_tree − ĝ_pool| = {:.2e}, max deviation {:.2} combined SE (≤ {Z_GATE})",
            rec.statistic,
            rec.max_z.unwrap()
        ),
    );
}

#[test]
fn criterion_06_derivative_and_ode() {
    let mut worst_slope = 0.0f64;
    let mut worst_ode = 0.0f64;
    for ex in reference_examples() {
        let sol = solution(ex);
        let s = FixedPointSolver::new(sol.offspring(), sol.alpha(), SolverConfig::default()).unwrap();
        let u = |t: f64| s.solve_u(t).unwrap();
        // Forward differences with one Richardson step.
        let h = 1e-5;
        let d = |h: f64| (u(h) - 1.0) / h;
        let slope = 2.0 * d(h / 2.0) - d(h);
        let b = sol.b();
        worst_slope = worst_slope.max((slope + 1.0 / b).abs() * b);

        let (alpha, kappa) = (sol.alpha(), sol.alpha() * b - 1.0);
        for i in 0..20 {
            let t = 0.5 + 9.5 * i as f64 / 19.0;
            let h = 1e-4 * t;
            let du = (u(t + h) - u(t - h)) / (2.0 * h);
            let ut = u(t);
            let rhs = (alpha * sol.offspring().pgf(ut).unwrap() - ut + 1.0 - alpha) / t;
            worst_ode = worst_ode.max((kappa * du - rhs).abs());
        }
    }
    verdict(
        6,
        worst_slope <= SLOPE_REL_TOL && worst_ode <= ODE_TOL,
        &format!(
            "max relative error of u'(0) vs −1/b = {worst_slope:.2e} (≤ {SLOPE_REL_TOL:e}), max ODE residual on [0.5, 10] = {worst_ode:.2e} (≤ {ODE_TOL:e})"
        ),
    );
}

#[test]
fn criterion_07_non_injectivity() {
    let grid = default_grid();
    let witness = non_injectivity_witness(0.6, 0.9, &grid).unwrap();
    let analytic = witness.analytic_sup_diff <= f64::EPSILON;

    // Empirical half: both specifications must be simulated.
    let mut empirical = Vec::new();
    let mut batches: Vec<SampleBatch> = Vec::new();
    for p in [0.6, 0.9] {
        match pool_spec(&solution(Example::Four { p })) {
            Ok(spec) => batches.push(iterate_pool(&spec).unwrap()),
            Err(e) => empirical.push(format!("p = {p} cannot be simulated ({e})")),
        }
    }
    let empirical_pass = if let [a, b] = &batches[..] {
        let rec = compare_laplace_batches(a, b, &grid, WITNESS_EMPIRICAL_TOL).unwrap();
        empirical.push(format!("sup|ĝ₀.₆ − ĝ₀.₉| = {:.2e}", rec.statistic));
        rec.statistic <= WITNESS_EMPIRICAL_TOL
    } else {
        false
    };
    verdict(
        7,
        analytic && empirical_pass,
        &format!(
            "analytic sup|g₀.₆ − g₀.₉| = {:e} ({}); empirical: {} ({})",
            witness.analytic_sup_diff,
            if analytic { "pass" } else { "fail" },
            empirical.join("; "),
            if empirical_pass { "pass" } else { "fail" }
        ),
    );
}

#[test]
fn criterion_08_density_validation() {
    let (mut mass, mut mean, mut lap) = (0.0f64, 0.0f64, 0.0f64);
    for ex in reference_examples() {
        let sol = solution(ex);
        mass = mass.max((sol.atom() + sol.continuous_mass().unwrap() - 1.0).abs());
        mean = mean.max((sol.mean_by_quadrature().unwrap() - 1.0).abs());
        for t in [0.5, 1.0, 2.0, 5.0, 10.0] {
            lap = lap.max((sol.laplace_by_quadrature(t).unwrap() - sol.g(t)).abs());
        }
    }
    verdict(
        8,
        mass <= MASS_TOL && mean <= MASS_TOL && lap <= DENSITY_LAPLACE_TOL,
        &format!(
            "max |mass − 1| = {mass:.1e}, max |mean − 1| = {mean:.1e} (≤ {MASS_TOL:e}), max |L[ν] − g| = {lap:.1e} (≤ {DENSITY_LAPLACE_TOL:e})"
        ),
    );
}

#[test]
fn criterion_09_determinism() {
    let sol = solution(Example::Four { p: 0.75 });
    let dir = tempfile::tempdir().unwrap();
    let run = |method: Method, workers: usize, name: &str| {
        let w = WeightLaw::new(sol.alpha(), sol.b()).unwrap();
        let spec = CascadeSpec::new(sol.offspring().clone(), w, method, SEED, workers).unwrap();
        let batch = match method {
            Method::Tree { .. } => simulate_tree(&spec, 20_000).unwrap(),
            Method::Pool { .. } => iterate_pool(&spec).unwrap(),
        };
        let path = dir.path().join(name);
        write_binary(&path, &batch).unwrap();
        std::fs::read(path).unwrap()
    };
    let tree = Method::Tree { depth: 8 };
    let pool = Method::Pool {
        pool_size: 50_000,
        iterations: 10,
    };
    let same_tree = run(tree, 2, "t1") == run(tree, 2, "t2");
    let same_pool = run(pool, 2, "p1") == run(pool, 2, "p2");
    let across_workers = run(tree, 1, "t3") == run(tree, 4, "t4") && run(pool, 1, "p3") == run(pool, 3, "p4");
    let nontrivial = run(tree, 1, "t5") != encode_binary(&[]);
    verdict(
        9,
        same_tree && same_pool && across_workers && nontrivial,
        &format!(
            "repeat runs identical: tree {same_tree}, pool {same_pool}; identical across worker counts: {across_workers}"
        ),
    );
}

#[test]
fn criterion_10_sentinel_power() {
    let report = sentinels(SEED).unwrap();
    let names: Vec<String> = report
        .records
        .iter()
        .map(|r| format!("{} {}", r.name, if r.pass { "tripped" } else { "NOT tripped" }))
        .collect();
    verdict(10, report.pass, &names.join("; "));
}

//! Statistical checks that simulated batches, the solver and the closed
//! forms describe the same law.
//!
//! Gates are expressed in standard errors (5 SE) rather than p-values,
//! except the Kolmogorov–Smirnov and atom tests which use 1% levels.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::cascade::{batch_stats, simulate, CascadeSpec, Method, Provenance, SampleBatch};
use crate::closed_forms::{AnalyticSolution, Example};
use crate::error::{Error, Result};
use crate::fixed_point::DepthLaplace;
use crate::roots::bisect;
use crate::weights::WeightLaw;

/// Deviation gate in standard errors.
pub const Z_GATE: f64 = 5.0;
/// Largest `t` accepted by [`compare_laplace`].
pub const T_MAX: f64 = 20.0;
/// Fewest nonzero values [`ks_continuous`] accepts.
pub const KS_MIN_NONZERO: usize = 1000;
/// Two-sided 1% normal quantile, used by the atom test.
pub const Z_ONE_PERCENT: f64 = 2.575_829_303_548_901;
/// Factor applied to 1% thresholds for pool batches.
pub const POOL_RELAXATION: f64 = 2.0;
/// Extinction tolerance on the zero fraction.
pub const EXTINCTION_TOL: f64 = 0.01;

// Deviations this small count as exact when the standard error is 0.
const EXACT_TOL: f64 = 1e-12;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Largest deviation in standard errors, for SE-gated checks.
    pub max_z: Option<f64>,
    /// Standard errors the decision used.
    pub standard_errors: Vec<f64>,
    pub note: String,
}

/// All checks run against one specification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub label: String,
    pub spec_hash: String,
    pub records: Vec<TestRecord>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(label: impl Into<String>, spec_hash: impl Into<String>) -> Self {
        VerificationReport {
            label: label.into(),
            spec_hash: spec_hash.into(),
            records: Vec::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, record: TestRecord) {
        self.pass &= record.pass;
        self.records.push(record);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = TestRecord>) {
        records.into_iter().for_each(|r| self.push(r));
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Plain-text table of every record in `reports`.
pub fn summary_table(reports: &[VerificationReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<34} {:<26} {:>12} {:>12} {:>8}  verdict",
        "specification", "check", "statistic", "threshold", "max z"
    );
    for r in reports {
        for rec in &r.records {
            let z = rec.max_z.map_or_else(|| "-".to_string(), |z| format!("{z:.2}"));
            let _ = writeln!(
                out,
                "{:<34} {:<26} {:>12.4e} {:>12.4e} {:>8}  {}",
                r.label,
                rec.name,
                rec.statistic,
                rec.threshold,
                z,
                verdict(rec.pass)
            );
        }
    }
    let all = reports.iter().all(|r| r.pass);
    let _ = writeln!(out, "overall: {}", verdict(all));
    out
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    match t_grid.iter().find(|t| !(**t >= 0.0 && **t <= T_MAX)) {
        Some(t) => Err(Error::Domain(format!("t grid must lie in [0, {T_MAX}], got {t}"))),
        None => Ok(()),
    }
}

// True when `dev` is within `Z_GATE` standard errors (exact match if se = 0).
fn within_se(dev: f64, se: f64) -> bool {
    if se > 0.0 {
        dev.abs() <= Z_GATE * se
    } else {
        dev.abs() <= EXACT_TOL
    }
}

fn z_of(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev.abs() / se
    } else if dev.abs() <= EXACT_TOL {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares the empirical Laplace transform with `g` on `t_grid`.
///
/// Passes when every point is within 5 SE and within `abs_cap`.
pub fn compare_laplace(
    batch: &SampleBatch,
    g: &dyn Fn(f64) -> f64,
    t_grid: &[f64],
    abs_cap: f64,
) -> Result<TestRecord> {
    check_grid(t_grid)?;
    let s = batch_stats(batch, t_grid)?;
    let mut sup = 0.0f64;
    let mut max_z = 0.0f64;
    let mut pass = true;
    for p in &s.laplace {
        let dev = p.value - g(p.t);
        sup = sup.max(dev.abs());
        max_z = max_z.max(z_of(dev, p.se));
        pass &= within_se(dev, p.se) && dev.abs() <= abs_cap;
    }
    Ok(TestRecord {
        name: "laplace".into(),
        statistic: sup,
        threshold: abs_cap,
        pass,
        max_z: Some(max_z),
        standard_errors: s.laplace.iter().map(|p| p.se).collect(),
        note: format!("sup |ĝ−g| over {} points; gate {Z_GATE} SE and cap", t_grid.len()),
    })
}

/// Compares the empirical Laplace transforms of two independent batches
/// within 5 combined SE and `abs_cap` at every grid point.
pub fn compare_laplace_batches(
    a: &SampleBatch,
    b: &SampleBatch,
    t_grid: &[f64],
    abs_cap: f64,
) -> Result<TestRecord> {
    check_grid(t_grid)?;
    let sa = batch_stats(a, t_grid)?;
    let sb = batch_stats(b, t_grid)?;
    let mut sup = 0.0f64;
    let mut max_z = 0.0f64;
    let mut pass = true;
    let mut ses = Vec::with_capacity(t_grid.len());
    for (pa, pb) in sa.laplace.iter().zip(&sb.laplace) {
        let dev = pa.value - pb.value;
        let se = pa.se.hypot(pb.se);
        ses.push(se);
        sup = sup.max(dev.abs());
        max_z = max_z.max(z_of(dev, se));
        pass &= within_se(dev, se) && dev.abs() <= abs_cap;
    }
    Ok(TestRecord {
        name: "laplace two-sample".into(),
        statistic: sup,
        threshold: abs_cap,
        pass,
        max_z: Some(max_z),
        standard_errors: ses,
        note: "sup |ĝ₁−ĝ₂|; gate 5 combined SE and cap".into(),
    })
}

/// `P(K ≤ x)` for the Kolmogorov distribution.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 0.3 {
        // The alternating series converges slowly here; use the dual form.
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=50)
            .map(|k| (-(((2 * k - 1) as f64).powi(2)) * c).exp())
            .sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    1.0 - 2.0 * s
}

/// Upper quantile `k` with `P(K > k) = level`.
pub fn kolmogorov_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    bisect(|x| kolmogorov_cdf(x) - (1.0 - level), 0.1, 5.0, 1e-12)
}

/// Kolmogorov–Smirnov test of the nonzero samples against the continuous
/// part of `sol`, plus a binomial test of the zero count against the atom.
///
/// Both use the 1% level, doubled for pool batches whose resampling
/// correlation makes the nominal sample size optimistic.
pub fn ks_continuous(batch: &SampleBatch, sol: &AnalyticSolution, pool: bool) -> Result<Vec<TestRecord>> {
    let mut xs: Vec<f64> = batch.values().iter().copied().filter(|&v| v > 0.0).collect();
    if xs.len() < KS_MIN_NONZERO {
        return Err(Error::InsufficientData(format!(
            "KS needs ≥ {KS_MIN_NONZERO} nonzero values, got {}",
            xs.len()
        )));
    }
    xs.sort_by(f64::total_cmp);
    let atom = sol.atom();
    let relax = if pool { POOL_RELAXATION } else { 1.0 };
    let n = xs.len() as f64;

    let mut d = 0.0f64;
    let mut cum = 0.0;
    let mut prev = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        if x > prev {
            cum += sol.density_integral(prev, x)?;
            prev = x;
        }
        let f = (cum / (1.0 - atom)).min(1.0);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max(hi - f).max(f - lo);
    }
    let crit = relax * kolmogorov_critical(0.01)? / n.sqrt();
    let ks = TestRecord {
        name: "ks".into(),
        statistic: d,
        threshold: crit,
        pass: d <= crit,
        max_z: None,
        standard_errors: vec![],
        note: format!("{} nonzero samples vs conditional cdf; 1% level ×{relax}", xs.len()),
    };

    let total = batch.count() as f64;
    let zeros = batch.zero_count() as f64;
    let se = (total * atom * (1.0 - atom)).sqrt();
    let z = z_of_atom(zeros - total * atom, se);
    let zcrit = relax * Z_ONE_PERCENT;
    let atom_rec = TestRecord {
        name: "atom".into(),
        statistic: zeros / total,
        threshold: atom,
        pass: z <= zcrit,
        max_z: Some(z),
        standard_errors: vec![se / total],
        note: format!("binomial z vs atom {atom}; gate {zcrit:.3}"),
    };
    Ok(vec![ks, atom_rec])
}

fn z_of_atom(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev.abs() / se
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// z-scores of the sample mean against 1 and of the second moment against
/// `E N(N−1)/(b(b − E W²))`.
pub fn moment_check(batch: &SampleBatch, spec: &CascadeSpec) -> Result<Vec<TestRecord>> {
    let s = batch_stats(batch, &[])?;
    let dev = s.mean - 1.0;
    let mean = TestRecord {
        name: "mean".into(),
        statistic: s.mean,
        threshold: 1.0,
        pass: within_se(dev, s.mean_se),
        max_z: Some(z_of(dev, s.mean_se)),
        standard_errors: vec![s.mean_se],
        note: "sample mean vs 1".into(),
    };
    let b = spec.b();
    let target = spec
        .weights()
        .second_moment()
        .filter(|&ew2| ew2 < b)
        .map(|ew2| spec.offspring().factorial_moment2() / (b * (b - ew2)));
    let second = match target {
        Some(target) => {
            let dev = s.second_moment - target;
            TestRecord {
                name: "second moment".into(),
                statistic: s.second_moment,
                threshold: target,
                pass: within_se(dev, s.second_moment_se),
                max_z: Some(z_of(dev, s.second_moment_se)),
                standard_errors: vec![s.second_moment_se],
                note: "sample E Y² vs E N(N−1)/(b(b−E W²))".into(),
            }
        }
        None => TestRecord {
            name: "second moment".into(),
            statistic: s.second_moment,
            threshold: f64::INFINITY,
            pass: false,
            max_z: None,
            standard_errors: vec![s.second_moment_se],
            note: "E W² unknown or ≥ b: E Y² is not finite".into(),
        },
    };
    Ok(vec![mean, second])
}

/// Zero fraction against the extinction probability `beta`.
pub fn extinction_check(batch: &SampleBatch, beta: f64) -> Result<TestRecord> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("batch is empty".into()));
    }
    let frac = batch.zero_count() as f64 / batch.count() as f64;
    Ok(TestRecord {
        name: "extinction".into(),
        statistic: (frac - beta).abs(),
        threshold: EXTINCTION_TOL,
        pass: (frac - beta).abs() <= EXTINCTION_TOL,
        max_z: None,
        standard_errors: vec![(frac * (1.0 - frac) / batch.count() as f64).sqrt()],
        note: format!("zero fraction {frac} vs β = {beta}"),
    })
}

/// Settings for [`run_matrix`].
#[derive(Debug, Clone, Serialize)]
pub struct MatrixOptions {
    pub seed: u64,
    pub worker_count: usize,
    pub tree_samples: usize,
    /// Upper bound on the expected number of nonzero nodes per tree.
    pub tree_work: f64,
    pub pool_size: usize,
    pub pool_iterations: usize,
    pub t_grid: Vec<f64>,
    pub laplace_cap: f64,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            seed: 20_240_601,
            worker_count: 1,
            tree_samples: 100_000,
            tree_work: 4096.0,
            pool_size: 200_000,
            pool_iterations: 50,
            t_grid: default_grid(),
            laplace_cap: 0.005,
        }
    }
}

/// `t = 0` followed by 50 log-spaced points in `[0.01, 20]`.
pub fn default_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((0..50).map(|i| 0.01 * 2000f64.powf(i as f64 / 49.0)));
    g
}

/// One parameter set per example, each simulable (`α ≤ 1`).
pub fn matrix_examples() -> Vec<Example> {
    vec![
        Example::One { n: 1 },
        Example::Two { rho: 0.9, alpha: 1.0 },
        Example::Three { rho: 0.5, n: 2 },
        Example::Four { p: 0.75 },
        Example::Five { p: 0.75 },
        Example::Six { p: 0.8 },
    ]
}

/// The deepest tree whose expected size and nonzero work stay in budget.
pub fn tree_depth_for(sol: &AnalyticSolution, tree_work: f64) -> u32 {
    let b = sol.b();
    let ab = sol.alpha() * b;
    let by_size = (crate::cascade::MAX_TREE_SIZE.ln() / b.ln()).floor();
    let by_work = (tree_work.ln() / ab.ln()).floor();
    by_size.min(by_work).max(1.0) as u32
}

/// Builds the simulation spec for an example.
pub fn example_spec(sol: &AnalyticSolution, method: Method, seed: u64, worker_count: usize) -> Result<CascadeSpec> {
    let w = WeightLaw::new(sol.alpha(), sol.b())?;
    CascadeSpec::new(sol.offspring().clone(), w, method, seed, worker_count)
}

/// Runs every check for one example and method.
pub fn verify_example(
    sol: &AnalyticSolution,
    method: Method,
    opts: &MatrixOptions,
) -> Result<VerificationReport> {
    let spec = example_spec(sol, method, opts.seed, opts.worker_count)?;
    let batch = simulate(&spec, opts.tree_samples)?;
    let pool = matches!(method, Method::Pool { .. });
    let mut report = VerificationReport::new(format!("{} {}", sol.example(), method), spec.hash());
    report.push(compare_laplace(&batch, &|t| sol.g(t), &opts.t_grid, opts.laplace_cap)?);
    if let Method::Tree { depth } = method {
        // The tree samples Y_depth exactly; its own transform separates
        // engine errors from the finite-depth bias seen by the other checks.
        let exact = DepthLaplace::new(sol.offspring(), sol.alpha(), depth, T_MAX)?;
        let mut rec = compare_laplace(&batch, &|t| exact.eval(t), &opts.t_grid, opts.laplace_cap)?;
        rec.name = format!("laplace depth-{depth}");
        rec.note = format!("sup |ĝ−g_{depth}| against the exact depth-{depth} transform");
        report.push(rec);
    }
    report.extend(ks_continuous(&batch, sol, pool)?);
    report.extend(moment_check(&batch, &spec)?);
    report.push(extinction_check(&batch, sol.beta())?);
    Ok(report)
}

/// The full matrix: six examples × {tree, pool}, followed by the
/// sentinel-power checks.
pub fn run_matrix(opts: &MatrixOptions) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    for ex in matrix_examples() {
        let sol = AnalyticSolution::new(ex)?;
        let depth = tree_depth_for(&sol, opts.tree_work);
        out.push(verify_example(&sol, Method::Tree { depth }, opts)?);
        let pool = Method::Pool {
            pool_size: opts.pool_size,
            iterations: opts.pool_iterations,
        };
        out.push(verify_example(&sol, pool, opts)?);
    }
    out.push(sentinels(opts.seed)?);
    Ok(out)
}

/// `count` direct draws from Gamma(2, rate 2), the law of example 1 with `n = 1`.
pub fn gamma22_batch(count: usize, seed: u64) -> Result<SampleBatch> {
    let dist = Gamma::new(2.0, 0.5).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..count).map(|_| dist.sample(&mut rng)).collect();
    SampleBatch::from_values(
        values,
        Provenance {
            spec_hash: "direct:gamma(2,2)".into(),
            seed,
        },
    )
}

/// Checks the harness rejects wrong inputs. Each record passes when the
/// wrapped check failed.
pub fn sentinels(seed: u64) -> Result<VerificationReport> {
    let ex1 = AnalyticSolution::new(Example::One { n: 1 })?;
    let ex4 = AnalyticSolution::new(Example::Four { p: 0.75 })?;
    let ones = SampleBatch::from_values(
        vec![1.0; 10_000],
        Provenance {
            spec_hash: "constant:1".into(),
            seed,
        },
    )?;
    let gamma = gamma22_batch(20_000, seed)?;
    let mut report = VerificationReport::new("sentinels", "-");

    let mut flip = |name: &str, inner: TestRecord| {
        report.push(TestRecord {
            name: format!("sentinel {name}"),
            pass: !inner.pass,
            note: format!("must fail: {}", inner.note),
            ..inner
        });
    };

    flip(
        "ones vs ex1 laplace",
        compare_laplace(&ones, &|t| ex1.g(t), &default_grid(), 0.005)?,
    );
    let ks = ks_continuous(&gamma, &ex4, false)?;
    flip("gamma vs ex4 ks", ks[0].clone());
    let spec = example_spec(&ex1, Method::Tree { depth: 0 }, seed, 1)?;
    let moments = moment_check(&ones, &spec)?;
    flip("ones second moment", moments[1].clone());
    Ok(report)
}

//! Semi-analytic solution of the fixed-point equation for the power-law
//! weight family and an arbitrary offspring law.
//!
//! With `u(t) = ∫ g(tx/b) μ(dx)` and `g = φ∘u`, the Laplace transform is
//! recovered from the implicit equation `b(1−u)Ω(u) = t`, where
//! `Ω(x) = exp ∫₁ˣ ω` and
//! `ω(x) = (αb−1)/(αφ(x)−x+1−α) + 1/(1−x)`.
//!
//! `ω` has a removable singularity at 1 and a simple pole at
//! `x₀ = φ⁻¹(β) = αβ+1−α`. The pole is split off analytically,
//! `ω(x) = c/(x−x₀) + ω_reg(x)`, and only the bounded remainder is
//! integrated numerically. Both zeros of `αφ(x)−x+1−α` are factored out
//! through divided differences of `φ`, so no catastrophic cancellation
//! occurs next to either endpoint.
//!
//! The analytic route also accepts `α > 1` (a signed weight measure with
//! the same moments); the simulator does not.

use crate::error::{Error, Result};
use crate::offspring::OffspringLaw;
use crate::quad::{integrate, QuadOptions};
use crate::roots::bisect;

const PANELS: usize = 64;

/// Tolerances for the implicit-equation solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Absolute tolerance on `∫ ω`.
    pub quad_tol: f64,
    /// Relative tolerance on the implicit-equation residual.
    pub root_tol: f64,
    /// Half-width `ε` of the window below `x = 1` where `ω` takes its limit.
    pub singular_window: f64,
    /// Upper end of tabulation grids.
    pub t_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            quad_tol: 1e-12,
            root_tol: 1e-13,
            singular_window: 1e-6,
            t_max: 20.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quad_tol > 0.0) {
            return Err(Error::Constraint(format!("quad_tol > 0 required, got {}", self.quad_tol)));
        }
        if !(self.root_tol > 0.0 && self.root_tol < self.quad_tol.sqrt()) {
            return Err(Error::Constraint(format!(
                "0 < root_tol < sqrt(quad_tol) required, got root_tol = {}",
                self.root_tol
            )));
        }
        if !(self.singular_window > 0.0 && self.singular_window < 1e-3) {
            return Err(Error::Constraint(format!(
                "0 < singular_window < 1e-3 required, got {}",
                self.singular_window
            )));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::Constraint(format!("t_max > 0 required, got {}", self.t_max)));
        }
        Ok(())
    }
}

/// Extinction probability `β = P(Y = 0)`: the fixed point below 1 of
/// `t ↦ φ(αt + 1 − α)`.
pub fn extinction_beta(offspring: &OffspringLaw, alpha: f64) -> Result<f64> {
    let b = offspring.mean();
    if !(alpha > 0.0) || !(alpha * b > 1.0) {
        return Err(Error::Constraint(format!(
            "αb > 1 required, got α = {alpha}, b = {b}"
        )));
    }
    let h = |t: f64| offspring.pgf_unchecked(alpha * t + 1.0 - alpha) - t;
    // For the formal extension α > 1 the pgf argument must stay ≥ 0.
    let lo = if alpha > 1.0 { (alpha - 1.0) / alpha } else { 0.0 };
    let h_lo = h(lo);
    if h_lo == 0.0 {
        return Ok(lo);
    }
    if h_lo < 0.0 {
        return Err(Error::Constraint(format!(
            "no fixed point of t ↦ φ(αt+1−α) in [{lo}, 1) for α = {alpha}"
        )));
    }
    // h is convex with h(1) = 0 and h'(1) = αb − 1 > 0, so it is negative
    // on (β, 1); walk towards 1 until that side is reached.
    let mut delta = 0.5 * (1.0 - lo);
    while h(1.0 - delta) >= 0.0 {
        delta *= 0.5;
        if delta < 1e-15 {
            return Err(Error::Convergence(
                "could not bracket the extinction probability below 1".into(),
            ));
        }
    }
    bisect(h, lo, 1.0 - delta, 0.0)
}

/// A solver for one `(φ, α)` pair. Construction builds the cumulative table
/// of `∫ ω_reg` on fixed knots; afterwards all queries are read-only.
#[derive(Debug, Clone)]
pub struct FixedPointSolver {
    offspring: OffspringLaw,
    alpha: f64,
    b: f64,
    beta: f64,
    lower: f64,
    // αb − 1
    kappa: f64,
    // residue of ω at the pole x₀
    pole: f64,
    omega_one: f64,
    window_start: f64,
    cfg: SolverConfig,
    knots: Vec<f64>,
    // ∫₁^{knot} ω_reg
    reg_cum: Vec<f64>,
}

impl FixedPointSolver {
    pub fn new(offspring: &OffspringLaw, alpha: f64, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let beta = extinction_beta(offspring, alpha)?;
        let b = offspring.mean();
        let kappa = alpha * b - 1.0;
        let lower = alpha * beta + 1.0 - alpha;
        // A(x₀) = αφ'(x₀) − 1 < 0 by convexity.
        let slope_at_lower = alpha * offspring.pgf_derivative(lower) - 1.0;
        if !(slope_at_lower < 0.0) {
            return Err(Error::Constraint(format!(
                "degenerate lower root: αφ'(x₀) − 1 = {slope_at_lower} at x₀ = {lower}"
            )));
        }
        let omega_one = -alpha * offspring.factorial_moment2() / (2.0 * kappa);
        let window_start = 1.0 - cfg.singular_window;
        if !(window_start > lower) {
            return Err(Error::Constraint(format!(
                "singular window overlaps the lower bracket x₀ = {lower}"
            )));
        }
        let mut solver = FixedPointSolver {
            offspring: offspring.clone(),
            alpha,
            b,
            beta,
            lower,
            kappa,
            pole: kappa / slope_at_lower,
            omega_one,
            window_start,
            cfg,
            knots: Vec::new(),
            reg_cum: Vec::new(),
        };
        solver.build_table()?;
        Ok(solver)
    }

    fn build_table(&mut self) -> Result<()> {
        let (lo, hi) = (self.lower, self.window_start);
        let knots: Vec<f64> = (0..=PANELS)
            .map(|i| lo + (hi - lo) * i as f64 / PANELS as f64)
            .collect();
        let mut reg_cum = vec![0.0; PANELS + 1];
        reg_cum[PANELS] = self.reg_integral_in_window(hi);
        let opts = QuadOptions {
            abs_tol: self.cfg.quad_tol / PANELS as f64,
            rel_tol: 0.0,
            max_intervals: 2000,
        };
        for i in (0..PANELS).rev() {
            let panel = integrate(|x| self.omega_reg(x), knots[i + 1], knots[i], opts)?;
            reg_cum[i] = reg_cum[i + 1] + panel.value;
        }
        self.knots = knots;
        self.reg_cum = reg_cum;
        Ok(())
    }

    pub fn offspring(&self) -> &OffspringLaw {
        &self.offspring
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    /// `φ⁻¹(β) = αβ + 1 − α`, the limit of `u(t)` as `t → ∞`.
    pub fn lower_limit(&self) -> f64 {
        self.lower
    }
    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }
    /// `γ = 1 − 1/(αb − 1)`.
    pub fn gamma(&self) -> f64 {
        1.0 - 1.0 / self.kappa
    }
    /// `ω(1) = −αφ''(1)/(2(αb−1))`.
    pub fn omega_at_one(&self) -> f64 {
        self.omega_one
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x > self.lower && x <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "x must lie in (φ⁻¹(β), 1] = ({}, 1], got {x}",
                self.lower
            )))
        }
    }

    // ω minus its pole part, for x₀ < x < 1 − ε.
    fn omega_reg(&self, x: f64) -> f64 {
        // Quadrature nodes can round onto x₀ itself; ω_reg is smooth there.
        let floor = self.lower + 1e-12 * (1.0 - self.lower);
        let x = x.max(floor);
        let mid = 0.5 * (self.lower + 1.0);
        if x < mid {
            // αφ(x) − x + 1 − α = (x − x₀) A(x)
            let a = self.alpha * self.offspring.pgf_divided_difference(x, self.lower) - 1.0;
            let a0 = self.alpha * self.offspring.pgf_derivative(self.lower) - 1.0;
            let dd_gap = self.offspring.pgf_derivative(self.lower)
                - self.offspring.pgf_divided_difference(x, self.lower);
            // κ/A(x) − κ/A(x₀) = κα(φ'(x₀) − D(x, x₀)) / (A(x) A(x₀))
            let numer = self.kappa * self.alpha * dd_gap / (a * a0);
            numer / (x - self.lower) + 1.0 / (1.0 - x)
        } else {
            // αφ(x) − x + 1 − α = (x − 1) B(x)
            let bq = self.alpha * self.offspring.pgf_divided_difference(x, 1.0) - 1.0;
            // κ/B(x) − 1 = α(b − D(x, 1)) / B(x)
            let dd_gap = self.b - self.offspring.pgf_divided_difference(x, 1.0);
            let smooth = self.alpha * dd_gap / bq / (x - 1.0);
            smooth - self.pole / (x - self.lower)
        }
    }

    // ∫₁ˣ ω_reg for x inside the window, where ω ≡ ω(1).
    fn reg_integral_in_window(&self, x: f64) -> f64 {
        self.omega_one * (x - 1.0) - self.pole * self.log_pole_ratio(x)
    }

    // ln((x − x₀)/(1 − x₀))
    fn log_pole_ratio(&self, x: f64) -> f64 {
        ((x - self.lower) / (1.0 - self.lower)).ln()
    }

    /// `ω(x)` for `x ∈ (φ⁻¹(β), 1]`; inside the window `1 − ε ≤ x ≤ 1` the
    /// limit value `ω(1)` is returned.
    pub fn omega(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        if x >= self.window_start {
            return Ok(self.omega_one);
        }
        Ok(self.omega_reg(x) + self.pole / (x - self.lower))
    }

    /// `ln Ω(x) = ∫₁ˣ ω`.
    pub fn log_omega_cap(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        if x >= self.window_start {
            return Ok(self.omega_one * (x - 1.0));
        }
        let step = (self.window_start - self.lower) / PANELS as f64;
        let idx = (((x - self.lower) / step).round() as usize).min(PANELS);
        let knot = self.knots[idx];
        let local = if knot == x {
            0.0
        } else {
            integrate(|s| self.omega_reg(s), knot, x, QuadOptions::abs(self.cfg.quad_tol))?.value
        };
        Ok(self.pole * self.log_pole_ratio(x) + self.reg_cum[idx] + local)
    }

    /// `Ω(x) = exp ∫₁ˣ ω`.
    pub fn omega_cap(&self, x: f64) -> Result<f64> {
        let v = self.log_omega_cap(x)?.exp();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Range(format!("Ω({x}) overflows")))
        }
    }

    /// `ln(b(1−u)Ω(u))`, the left side of the implicit equation in log form.
    pub fn log_implicit_lhs(&self, u: f64) -> Result<f64> {
        Ok((self.b * (1.0 - u)).ln() + self.log_omega_cap(u)?)
    }

    /// Relative residual `b(1−u)Ω(u)/t − 1` of the implicit equation.
    pub fn implicit_residual(&self, u: f64, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(if u == 1.0 { 0.0 } else { f64::INFINITY });
        }
        Ok((self.log_implicit_lhs(u)? - t.ln()).exp_m1())
    }

    /// The unique `u ∈ (φ⁻¹(β), 1]` with `b(1−u)Ω(u) = t`.
    pub fn solve_u(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("t must be finite and ≥ 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        let log_t = t.ln();
        let pad = (4.0 * f64::EPSILON * self.lower).max(f64::MIN_POSITIVE);
        let lo = self.lower + pad;
        let h = |u: f64| -> f64 {
            match self.log_implicit_lhs(u) {
                Ok(v) => v - log_t,
                Err(_) => f64::NAN,
            }
        };
        let h_lo = h(lo);
        if h_lo.is_nan() {
            return Err(Error::Convergence(format!("implicit equation undefined near u = {lo}")));
        }
        if h_lo <= 0.0 {
            return Err(Error::Range(format!(
                "t = {t} exceeds the largest representable value b(1−u)Ω(u) at the lower bracket"
            )));
        }
        let u = bisect(h, lo, 1.0, 0.0)?;
        let residual = self.implicit_residual(u, t)?.abs();
        // The attainable residual is limited by the slope of ln(b(1−u)Ω(u)).
        let slope = if u < 1.0 { (self.omega(u)? - 1.0 / (1.0 - u)).abs() } else { 0.0 };
        let allowed = 10.0 * self.cfg.root_tol + 8.0 * f64::EPSILON * u * slope;
        if !(residual <= allowed) {
            return Err(Error::Convergence(format!(
                "implicit residual {residual:e} exceeds {allowed:e} at t = {t}"
            )));
        }
        Ok(u)
    }

    /// `g(t) = φ(u(t)) = E e^{−tY}`.
    pub fn g(&self, t: f64) -> Result<f64> {
        let u = self.solve_u(t)?;
        Ok(self.offspring.pgf_unchecked(u))
    }

    /// `|g(t) − φ(∫ g(tx/b) μ(dx))|` using this solver's `g`.
    pub fn laplace_residual(&self, t: f64) -> Result<f64> {
        let f = |s: f64| self.g(s).unwrap_or(f64::NAN);
        functional_residual(&self.offspring, self.alpha, &f, t, self.cfg.quad_tol)
    }

    /// `(t, u, g, relative implicit residual)` rows on a grid.
    pub fn tabulate(&self, t_grid: &[f64]) -> Result<Vec<SolutionRow>> {
        t_grid
            .iter()
            .map(|&t| {
                let u = self.solve_u(t)?;
                Ok(SolutionRow {
                    t,
                    u,
                    g: self.offspring.pgf_unchecked(u),
                    implicit_residual: self.implicit_residual(u, t)?,
                })
            })
            .collect()
    }
}

/// One tabulated point of the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionRow {
    pub t: f64,
    pub u: f64,
    pub g: f64,
    pub implicit_residual: f64,
}

/// Residual of the functional equation `g(t) = φ(∫ g(tx/b) μ(dx))` for an
/// arbitrary candidate `g` and the power-law weights with parameter `α`.
///
/// The substitution `x = b·v^{1/(1−γ)}` maps the weight density to the
/// constant `α` on `(0, 1)`, so the inner integral is
/// `1 − α + α ∫₀¹ g(t·v^{αb−1}) dv`.
pub fn functional_residual(
    offspring: &OffspringLaw,
    alpha: f64,
    g: &dyn Fn(f64) -> f64,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t must be ≥ 0, got {t}")));
    }
    if t == 0.0 {
        let g0 = g(0.0);
        return Ok((g0 - offspring.pgf_unchecked(1.0 - alpha + alpha * g0)).abs());
    }
    let exponent = alpha * offspring.mean() - 1.0;
    let inner = integrate(
        |v: f64| g(t * v.powf(exponent)),
        0.0,
        1.0,
        QuadOptions::abs(tol),
    )?;
    let u = 1.0 - alpha + alpha * inner.value;
    Ok((g(t) - offspring.pgf_unchecked(u)).abs())
}

/// Laplace transform of the finite-depth martingale `Yₙ` (with `Y₀ ≡ 1`)
/// for the power-law weights, tabulated on `[0, t_max]`.
///
/// Built by iterating `gₖ₊₁(t) = φ(1 − α + α∫₀¹ gₖ(t·v^{αb−1}) dv)` from
/// `g₀(t) = e^{−t}`. Since `v^{αb−1} ≤ 1`, each step only needs the previous
/// table on the same range. Values are held on a uniform grid in `ln t` and
/// interpolated by cubic Hermite splines; below the grid `g(t) = 1 − t`.
#[derive(Debug, Clone)]
pub struct DepthLaplace {
    depth: u32,
    log_lo: f64,
    step: f64,
    values: Vec<f64>,
    t_max: f64,
}

const DEPTH_GRID: usize = 1500;
const DEPTH_T_MIN: f64 = 1e-12;

impl DepthLaplace {
    pub fn new(offspring: &OffspringLaw, alpha: f64, depth: u32, t_max: f64) -> Result<Self> {
        let b = offspring.mean();
        if !(alpha * b > 1.0) {
            return Err(Error::Constraint(format!("αb > 1 required, got αb = {}", alpha * b)));
        }
        if !(t_max > DEPTH_T_MIN && t_max.is_finite()) {
            return Err(Error::Domain(format!("t_max must exceed {DEPTH_T_MIN}, got {t_max}")));
        }
        let log_lo = DEPTH_T_MIN.ln();
        let step = (t_max.ln() - log_lo) / (DEPTH_GRID - 1) as f64;
        let ts: Vec<f64> = (0..DEPTH_GRID).map(|i| (log_lo + step * i as f64).exp()).collect();
        let mut table = DepthLaplace {
            depth: 0,
            log_lo,
            step,
            values: ts.iter().map(|t| (-t).exp()).collect(),
            t_max,
        };
        let kappa = alpha * b - 1.0;
        for k in 0..depth {
            let next = ts
                .iter()
                .map(|&t| {
                    let inner = integrate(
                        |v: f64| table.eval(t * v.powf(kappa)),
                        0.0,
                        1.0,
                        QuadOptions::abs(1e-11),
                    )?;
                    Ok(offspring.pgf_unchecked(1.0 - alpha + alpha * inner.value))
                })
                .collect::<Result<Vec<f64>>>()?;
            table.values = next;
            table.depth = k + 1;
        }
        Ok(table)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `E e^{−tY_depth}` for `0 ≤ t ≤ t_max`; clamps above `t_max`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= DEPTH_T_MIN {
            return 1.0 - t;
        }
        let x = ((t.min(self.t_max).ln() - self.log_lo) / self.step).max(0.0);
        let n = self.values.len();
        let i = (x.floor() as usize).min(n - 2);
        let f = x - i as f64;
        let y = |j: isize| self.values[j.clamp(0, n as isize - 1) as usize];
        let i = i as isize;
        let (p0, p1) = (y(i), y(i + 1));
        // Catmull-Rom tangents, one-sided at the ends.
        let m0 = if i == 0 { p1 - p0 } else { 0.5 * (p1 - y(i - 1)) };
        let m1 = if i + 2 >= n as isize { p1 - p0 } else { 0.5 * (y(i + 2) - p0) };
        let f2 = f * f;
        let f3 = f2 * f;
        (2.0 * f3 - 3.0 * f2 + 1.0) * p0
            + (f3 - 2.0 * f2 + f) * m0
            + (-2.0 * f3 + 3.0 * f2) * p1
            + (f3 - f2) * m1
    }
}

/// `ω(x)` with default tolerances.
pub fn omega_eval(offspring: &OffspringLaw, alpha: f64, x: f64) -> Result<f64> {
    FixedPointSolver::new(offspring, alpha, SolverConfig::default())?.omega(x)
}

/// `Ω(x)`.
pub fn omega_cap(offspring: &OffspringLaw, alpha: f64, x: f64, cfg: SolverConfig) -> Result<f64> {
    FixedPointSolver::new(offspring, alpha, cfg)?.omega_cap(x)
}

/// `u(t)`.
pub fn solve_u(offspring: &OffspringLaw, alpha: f64, t: f64, cfg: SolverConfig) -> Result<f64> {
    FixedPointSolver::new(offspring, alpha, cfg)?.solve_u(t)
}

/// `g(t) = φ(u(t))`.
pub fn g_of_t(offspring: &OffspringLaw, alpha: f64, t: f64, cfg: SolverConfig) -> Result<f64> {
    FixedPointSolver::new(offspring, alpha, cfg)?.g(t)
}

/// `|r(t)|` for the solver's own `g`.
pub fn laplace_residual(offspring: &OffspringLaw, alpha: f64, t: f64, cfg: SolverConfig) -> Result<f64> {
    FixedPointSolver::new(offspring, alpha, cfg)?.laplace_residual(t)
}

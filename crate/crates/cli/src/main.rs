//! `smoothfix`: simulate, solve and verify fixed points of the smoothing
//! transformation from the command line.
//!
//! Exit status: 0 success, 1 verification failure, 2 usage error,
//! 3 parameter constraint violated, 4 numeric or I/O failure.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use smoothfix::cascade::{self, batch_stats, simulate, BatchMetadata, CascadeSpec, Method};
use smoothfix::closed_forms::{reference_examples, AnalyticSolution, Example};
use smoothfix::fixed_point::{extinction_beta, FixedPointSolver, SolverConfig};
use smoothfix::verify::{self, MatrixOptions};
use smoothfix::weights::power_law_moment;
use smoothfix::{OffspringLaw, WeightLaw};

use config::{resolve_grid, usage, RunConfig, UsageError, DEFAULT_T_GRID};

#[derive(Parser)]
#[command(name = "smoothfix", version, about = "Fixed points of the smoothing transformation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo samples of Y by tree recursion or pool iteration.
    Simulate(Flags),
    /// Solve the implicit Laplace-transform equation on a t-grid.
    Solve(Flags),
    /// Tabulate a closed-form example (Laplace transform or density).
    Table(Flags),
    /// Run the verification matrix: six examples × {tree, pool}.
    Verify(Flags),
    /// Summarise the closed-form examples.
    Examples(Flags),
}

/// Settings shared by every subcommand. Each one reads only what it needs.
#[derive(clap::Args, Debug, Clone)]
struct Flags {
    /// Key=value config file, or a JSON sidecar from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Offspring law, e.g. `geometric:p=0.75` or `pmf:0.2,0.3,0.5`.
    #[arg(long)]
    offspring: Option<String>,
    /// P(W ≠ 0) for the power-law weights.
    #[arg(long)]
    alpha: Option<f64>,
    /// `tree:depth=D` or `pool:M=SIZE,K=ITERATIONS`.
    #[arg(long)]
    method: Option<String>,
    /// Samples for tree simulation.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// `min:max:points[:log|:linear]`, or `default`.
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    /// Grid of s values for `table --kind density`.
    #[arg(long = "s-grid")]
    s_grid: Option<String>,
    /// `bin` or `csv` for simulate; `csv` or `json` elsewhere.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Example number 1–6.
    #[arg(long)]
    id: Option<u8>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// `laplace` or `density` for `table`.
    #[arg(long)]
    kind: Option<String>,
    /// Pool size for `verify`.
    #[arg(long = "pool-size")]
    pool_size: Option<usize>,
    /// Pool iterations for `verify`.
    #[arg(long)]
    iterations: Option<usize>,
}

impl Flags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply("offspring", self.offspring.as_ref());
        cfg.apply("alpha", self.alpha);
        cfg.apply("method", self.method.as_ref());
        cfg.apply("count", self.count);
        cfg.apply("seed", self.seed);
        cfg.apply("workers", self.workers);
        cfg.apply("t_grid", self.t_grid.as_ref());
        cfg.apply("s_grid", self.s_grid.as_ref());
        cfg.apply("format", self.format.as_ref());
        cfg.apply("output", self.output.as_ref().map(|p| p.display()));
        cfg.apply("id", self.id);
        cfg.apply("n", self.n);
        cfg.apply("rho", self.rho);
        cfg.apply("p", self.p);
        cfg.apply("kind", self.kind.as_ref());
        cfg.apply("pool_size", self.pool_size);
        cfg.apply("iterations", self.iterations);
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<smoothfix::Error>() {
        Some(smoothfix::Error::Parse(_)) => 2,
        Some(err) if err.is_constraint() => 3,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(f) => cmd_simulate(f.resolve()?),
        Command::Solve(f) => cmd_solve(f.resolve()?),
        Command::Table(f) => cmd_table(f.resolve()?),
        Command::Verify(f) => cmd_verify(f.resolve()?),
        Command::Examples(f) => cmd_examples(f.resolve()?),
    }
}

/// Derived quantities for `(φ, α)`, printed before any work.
fn derived(off: &OffspringLaw, alpha: f64) -> Result<serde_json::Value> {
    let b = off.mean();
    if !(alpha * b > 1.0) {
        return Err(smoothfix::Error::Constraint(format!(
            "αb > 1 required, got α = {alpha}, b = {b}"
        ))
        .into());
    }
    let gamma = 1.0 - 1.0 / (alpha * b - 1.0);
    let beta = extinction_beta(off, alpha)?;
    let ew2 = power_law_moment(alpha, b, 2);
    let weights = WeightLaw::new(alpha, b).ok();
    let ew_log_w = weights.map(|w| w.w_log_w()).transpose()?;
    Ok(json!({
        "b": b,
        "gamma": gamma,
        "beta": beta,
        "lower_limit": alpha * beta + 1.0 - alpha,
        "e_w2": ew2,
        "e_w_log_w": ew_log_w,
        "l2_condition": ew2 < b,
        "kp_condition": ew_log_w.map(|v| v < b.ln()),
        "weights_are_probability": weights.is_some(),
    }))
}

fn print_derived(d: &serde_json::Value) {
    let mut out = String::new();
    let _ = writeln!(out, "# derived quantities");
    for key in [
        "b",
        "gamma",
        "beta",
        "lower_limit",
        "e_w2",
        "e_w_log_w",
        "l2_condition",
        "kp_condition",
        "weights_are_probability",
    ] {
        let v = &d[key];
        let text = if v.is_null() { "n/a (α > 1)".to_string() } else { v.to_string() };
        let _ = writeln!(out, "#   {key:<24} {text}");
    }
    print!("{out}");
}

fn offspring_alpha(cfg: &RunConfig) -> Result<(OffspringLaw, f64)> {
    let off: OffspringLaw = cfg.require::<String>("offspring")?.parse()?;
    let alpha: f64 = cfg.require("alpha")?;
    Ok((off, alpha))
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_simulate(mut cfg: RunConfig) -> Result<ExitCode> {
    let (off, alpha) = offspring_alpha(&cfg)?;
    let method: Method = cfg.require::<String>("method")?.parse()?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let workers: usize = cfg.get_or("workers", 1)?;
    let count = match method {
        Method::Tree { .. } => cfg.get_or("count", 100_000usize)?,
        Method::Pool { .. } => 0,
    };
    let format: String = cfg.get_or("format", "bin".to_string())?;
    if format != "bin" && format != "csv" {
        return Err(usage(format!("simulate writes bin or csv, got format '{format}'")));
    }
    let default_out = format!("samples.{format}");
    let output: PathBuf = cfg.get_or("output", default_out)?.into();
    let grid = resolve_grid(&cfg.get_or("t_grid", DEFAULT_T_GRID.to_string())?)?;

    let d = derived(&off, alpha)?;
    print_derived(&d);
    let weights = WeightLaw::new(alpha, off.mean())?;
    let spec = CascadeSpec::new(off, weights, method, seed, workers)?;
    let batch = simulate(&spec, count)?;
    match format.as_str() {
        "bin" => cascade::write_binary(&output, &batch)?,
        _ => cascade::write_csv(&output, &batch)?,
    }
    let summary = batch_stats(&batch, &grid)?;
    let meta = json!({
        "command": "simulate",
        "config": cfg.to_json(),
        "derived": d,
        "batch": BatchMetadata::new(&spec, &batch),
        "summary": summary,
    });
    let side = sidecar_path(&output);
    cascade::write_json(&side, &meta)?;
    println!("spec hash      {}", spec.hash());
    println!("samples        {} ({} zero)", batch.count(), batch.zero_count());
    println!("mean           {:.6} ± {:.2e}", summary.mean, summary.mean_se);
    println!("second moment  {:.6} ± {:.2e}", summary.second_moment, summary.second_moment_se);
    println!("zero fraction  {:.6} ± {:.2e}", summary.zero_fraction, summary.zero_fraction_se);
    println!("wrote {} and {}", output.display(), side.display());
    Ok(ExitCode::SUCCESS)
}

fn output_format(cfg: &mut RunConfig) -> Result<String> {
    let format: String = cfg.get_or("format", "csv".to_string())?;
    if format != "csv" && format != "json" {
        return Err(usage(format!("format must be csv or json, got '{format}'")));
    }
    Ok(format)
}

// Writes to the output path atomically, or to stdout when none is set.
fn emit(cfg: &RunConfig, body: &str, meta: serde_json::Value) -> Result<()> {
    match cfg.raw("output") {
        Some(path) => {
            let path = Path::new(path);
            cascade::write_atomic(path, body.as_bytes())?;
            let side = sidecar_path(path);
            cascade::write_json(&side, &meta)?;
            println!("wrote {} and {}", path.display(), side.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).context("writing to stdout")?;
        }
    }
    Ok(())
}

fn cmd_solve(mut cfg: RunConfig) -> Result<ExitCode> {
    let (off, alpha) = offspring_alpha(&cfg)?;
    let grid = resolve_grid(&cfg.get_or("t_grid", DEFAULT_T_GRID.to_string())?)?;
    let format = output_format(&mut cfg)?;
    let d = derived(&off, alpha)?;
    print_derived(&d);
    let solver = FixedPointSolver::new(&off, alpha, SolverConfig::default())?;
    let rows = solver.tabulate(&grid)?;
    let residuals = grid
        .iter()
        .map(|&t| solver.laplace_residual(t))
        .collect::<smoothfix::Result<Vec<f64>>>()?;
    let body = if format == "csv" {
        let mut s = format!("# smoothfix solve offspring={off} alpha={alpha}\n");
        s.push_str("t,u,g,implicit_residual,laplace_residual\n");
        for (r, lr) in rows.iter().zip(&residuals) {
            let _ = writeln!(s, "{:?},{:?},{:?},{:e},{:e}", r.t, r.u, r.g, r.implicit_residual, lr);
        }
        s
    } else {
        let rows: Vec<_> = rows
            .iter()
            .zip(&residuals)
            .map(|(r, lr)| {
                json!({"t": r.t, "u": r.u, "g": r.g,
                       "implicit_residual": r.implicit_residual, "laplace_residual": lr})
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({ "offspring": off.to_string(), "alpha": alpha, "rows": rows }))?;
        s.push('\n');
        s
    };
    let meta = json!({ "command": "solve", "config": cfg.to_json(), "derived": d });
    emit(&cfg, &body, meta)?;
    Ok(ExitCode::SUCCESS)
}

fn example_from(cfg: &RunConfig) -> Result<Example> {
    let id: u8 = cfg.require("id")?;
    Ok(match id {
        1 => Example::One { n: cfg.require("n")? },
        2 => Example::Two {
            rho: cfg.require("rho")?,
            alpha: cfg.require("alpha")?,
        },
        3 => Example::Three {
            rho: cfg.require("rho")?,
            n: cfg.require("n")?,
        },
        4 => Example::Four { p: cfg.require("p")? },
        5 => Example::Five { p: cfg.require("p")? },
        6 => Example::Six { p: cfg.require("p")? },
        other => return Err(usage(format!("example id must be 1–6, got {other}"))),
    })
}

fn cmd_table(mut cfg: RunConfig) -> Result<ExitCode> {
    let sol = AnalyticSolution::new(example_from(&cfg)?)?;
    let kind: String = cfg.get_or("kind", "laplace".to_string())?;
    let format = output_format(&mut cfg)?;
    let d = derived(sol.offspring(), sol.alpha())?;
    print_derived(&d);
    let (header, rows): (&[&str], Vec<Vec<f64>>) = match kind.as_str() {
        "laplace" => {
            let grid = resolve_grid(&cfg.get_or("t_grid", DEFAULT_T_GRID.to_string())?)?;
            let solver = FixedPointSolver::new(sol.offspring(), sol.alpha(), SolverConfig::default())?;
            let rows = grid
                .iter()
                .map(|&t| {
                    let gs = solver.g(t)?;
                    Ok(vec![t, sol.u(t), sol.g(t), gs, (gs - sol.g(t)).abs()])
                })
                .collect::<smoothfix::Result<_>>()?;
            (&["t", "u", "g", "g_solver", "abs_diff"], rows)
        }
        "density" => {
            let grid = resolve_grid(&cfg.get_or("s_grid", "0.05:10:200".to_string())?)?;
            let rows = grid
                .iter()
                .filter(|&&s| s > 0.0)
                .map(|&s| Ok(vec![s, sol.density(s)?, sol.cdf(s)?]))
                .collect::<smoothfix::Result<_>>()?;
            (&["s", "density", "cdf"], rows)
        }
        other => return Err(usage(format!("kind must be laplace or density, got '{other}'"))),
    };
    let body = if format == "csv" {
        let mut s = format!("# {} atom={}\n{}\n", sol.example(), sol.atom(), header.join(","));
        for r in &rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    } else {
        let rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| header.iter().zip(r).map(|(k, v)| (k.to_string(), json!(v))).collect())
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({
            "example": sol.example(), "atom": sol.atom(), "rows": rows
        }))?;
        s.push('\n');
        s
    };
    let meta = json!({ "command": "table", "config": cfg.to_json(), "derived": d });
    emit(&cfg, &body, meta)?;
    Ok(ExitCode::SUCCESS)
}

fn describe(sol: &AnalyticSolution) -> Result<()> {
    println!("{}", sol.example());
    println!("  offspring      {}", sol.offspring());
    println!("  alpha          {}", sol.alpha());
    println!("  law            {}", sol.describe());
    println!("  beta (atom)    {}", sol.atom());
    println!("  E Y            {}", sol.mean());
    println!("  E Y^2          {}", sol.second_moment()?);
    if !sol.weights_admissible() {
        println!("  note           α > 1: μ is not a probability law, simulation unavailable");
    }
    Ok(())
}

fn cmd_examples(cfg: RunConfig) -> Result<ExitCode> {
    if cfg.raw("id").is_some() {
        let sol = AnalyticSolution::new(example_from(&cfg)?)?;
        print_derived(&derived(sol.offspring(), sol.alpha())?);
        describe(&sol)?;
    } else {
        for ex in reference_examples() {
            describe(&AnalyticSolution::new(ex)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(mut cfg: RunConfig) -> Result<ExitCode> {
    let defaults = MatrixOptions::default();
    let opts = MatrixOptions {
        seed: cfg.get_or("seed", defaults.seed)?,
        worker_count: cfg.get_or("workers", defaults.worker_count)?,
        tree_samples: cfg.get_or("count", defaults.tree_samples)?,
        pool_size: cfg.get_or("pool_size", defaults.pool_size)?,
        pool_iterations: cfg.get_or("iterations", defaults.pool_iterations)?,
        t_grid: resolve_grid(&cfg.get_or("t_grid", DEFAULT_T_GRID.to_string())?)?,
        ..defaults
    };
    let output: PathBuf = cfg.get_or("output", "verify_report.json".to_string())?.into();
    let reports = verify::run_matrix(&opts)?;
    print!("{}", verify::summary_table(&reports));
    let pass = reports.iter().all(|r| r.pass);
    cascade::write_json(
        &output,
        &json!({ "command": "verify", "config": cfg.to_json(), "options": opts,
                 "pass": pass, "reports": reports }),
    )?;
    println!("wrote {}", output.display());
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

//! Offspring distributions described by their probability generating
//! function `φ(x) = E x^N`.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::roots::bisect;

/// Largest support size accepted for [`LawKind::Pmf`].
pub const MAX_PMF_SUPPORT: usize = 1 << 16;

/// Parametric family of the offspring count `N`.
#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    /// `N = n + 1` almost surely, `φ(x) = x^{n+1}`.
    Deterministic { n: u32 },
    /// `N ∈ {0, 2}`, `φ(x) = 1 − ρ + ρx²`.
    Binary { rho: f64 },
    /// `N ∈ {1, n+1}`, `φ(x) = (1−ρ)x + ρx^{n+1}`.
    Delayed { rho: f64, n: u32 },
    /// `P(N = k) = (1−p)p^k` for `k ≥ 0`.
    Geometric { p: f64 },
    /// Geometric shifted to start at 1, `φ(x) = (1−p)x/(1−px)`.
    ShiftedGeometric { p: f64 },
    /// Geometric shifted to start at 2, `φ(x) = (1−p)x²/(1−px)`.
    SquareGeometric { p: f64 },
    /// Explicit probabilities `q_0, …, q_m`.
    Pmf(Vec<f64>),
}

/// A validated offspring law with `b = φ'(1) > 1` and `φ''(1) < ∞`.
///
/// Immutable after construction; sampling takes the caller's random stream.
#[derive(Debug, Clone)]
pub struct OffspringLaw {
    kind: LawKind,
    mean: f64,
    factorial_moment2: f64,
    alias: Option<WeightedAliasIndex<f64>>,
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Constraint(format!("0 < {name} < 1 required, got {name} = {v}")))
    }
}

fn check_unit_half_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Constraint(format!("0 < {name} ≤ 1 required, got {name} = {v}")))
    }
}

impl OffspringLaw {
    pub fn new(kind: LawKind) -> Result<Self> {
        let mut kind = kind;
        let mut alias = None;
        let (mean, fm2) = match &mut kind {
            LawKind::Deterministic { n } => {
                if *n < 1 {
                    return Err(Error::Constraint("n ≥ 1 required for deterministic law".into()));
                }
                let k = f64::from(*n) + 1.0;
                (k, k * (k - 1.0))
            }
            LawKind::Binary { rho } => {
                check_unit_half_open("rho", *rho)?;
                (2.0 * *rho, 2.0 * *rho)
            }
            LawKind::Delayed { rho, n } => {
                check_unit_half_open("rho", *rho)?;
                if *n < 1 {
                    return Err(Error::Constraint("n ≥ 1 required for delayed law".into()));
                }
                let n = f64::from(*n);
                (1.0 + *rho * n, *rho * (n + 1.0) * n)
            }
            LawKind::Geometric { p } => {
                check_unit_open("p", *p)?;
                let q = 1.0 - *p;
                (*p / q, 2.0 * *p * *p / (q * q))
            }
            LawKind::ShiftedGeometric { p } => {
                check_unit_open("p", *p)?;
                let q = 1.0 - *p;
                (1.0 / q, 2.0 * *p / (q * q))
            }
            LawKind::SquareGeometric { p } => {
                check_unit_open("p", *p)?;
                let q = 1.0 - *p;
                let m = *p / q;
                let second = *p * (1.0 + *p) / (q * q);
                (2.0 + m, second + 3.0 * m + 2.0)
            }
            LawKind::Pmf(probs) => {
                if probs.is_empty() || probs.len() > MAX_PMF_SUPPORT {
                    return Err(Error::Constraint(format!(
                        "pmf support size must be in 1..={MAX_PMF_SUPPORT}, got {}",
                        probs.len()
                    )));
                }
                if probs.iter().any(|q| !q.is_finite() || *q < 0.0) {
                    return Err(Error::Constraint("pmf probabilities must be finite and ≥ 0".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Constraint(format!(
                        "pmf probabilities must sum to 1, got {total}"
                    )));
                }
                for q in probs.iter_mut() {
                    *q /= total;
                }
                let mean = probs.iter().enumerate().map(|(k, q)| k as f64 * q).sum();
                let fm2 = probs
                    .iter()
                    .enumerate()
                    .map(|(k, q)| k as f64 * (k as f64 - 1.0) * q)
                    .sum();
                alias = Some(
                    WeightedAliasIndex::new(probs.clone())
                        .map_err(|e| Error::Constraint(format!("pmf: {e}")))?,
                );
                (mean, fm2)
            }
        };
        if !(mean > 1.0) {
            return Err(Error::Constraint(format!(
                "mean offspring b = φ'(1) > 1 required, got b = {mean}"
            )));
        }
        if !fm2.is_finite() {
            return Err(Error::Constraint("φ''(1) must be finite".into()));
        }
        Ok(OffspringLaw {
            kind,
            mean,
            factorial_moment2: fm2,
            alias,
        })
    }

    pub fn deterministic(n: u32) -> Result<Self> {
        Self::new(LawKind::Deterministic { n })
    }
    pub fn binary(rho: f64) -> Result<Self> {
        Self::new(LawKind::Binary { rho })
    }
    pub fn delayed(rho: f64, n: u32) -> Result<Self> {
        Self::new(LawKind::Delayed { rho, n })
    }
    pub fn geometric(p: f64) -> Result<Self> {
        Self::new(LawKind::Geometric { p })
    }
    pub fn shifted_geometric(p: f64) -> Result<Self> {
        Self::new(LawKind::ShiftedGeometric { p })
    }
    pub fn square_geometric(p: f64) -> Result<Self> {
        Self::new(LawKind::SquareGeometric { p })
    }
    pub fn pmf(probs: Vec<f64>) -> Result<Self> {
        Self::new(LawKind::Pmf(probs))
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    /// `b = φ'(1) = E N`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `φ''(1) = E N(N−1)`.
    pub fn factorial_moment2(&self) -> f64 {
        self.factorial_moment2
    }

    /// `φ(x)` for `x ∈ [0, 1]`.
    pub fn pgf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("pgf argument must lie in [0, 1], got {x}")));
        }
        Ok(self.pgf_unchecked(x))
    }

    /// `φ(x)` without the domain check. The closed forms stay meaningful
    /// slightly outside `[0, 1]`, which the solvers rely on near endpoints.
    pub(crate) fn pgf_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            LawKind::Deterministic { n } => x.powi(*n as i32 + 1),
            LawKind::Binary { rho } => 1.0 - rho + rho * x * x,
            LawKind::Delayed { rho, n } => (1.0 - rho) * x + rho * x.powi(*n as i32 + 1),
            LawKind::Geometric { p } => (1.0 - p) / (1.0 - p * x),
            LawKind::ShiftedGeometric { p } => (1.0 - p) * x / (1.0 - p * x),
            LawKind::SquareGeometric { p } => (1.0 - p) * x * x / (1.0 - p * x),
            LawKind::Pmf(q) => q.iter().rev().fold(0.0, |acc, &c| acc * x + c),
        }
    }

    /// `φ'(x)`.
    pub fn pgf_derivative(&self, x: f64) -> f64 {
        match &self.kind {
            LawKind::Deterministic { n } => (f64::from(*n) + 1.0) * x.powi(*n as i32),
            LawKind::Binary { rho } => 2.0 * rho * x,
            LawKind::Delayed { rho, n } => {
                (1.0 - rho) + rho * (f64::from(*n) + 1.0) * x.powi(*n as i32)
            }
            LawKind::Geometric { p } => {
                let d = 1.0 - p * x;
                (1.0 - p) * p / (d * d)
            }
            LawKind::ShiftedGeometric { p } => {
                let d = 1.0 - p * x;
                (1.0 - p) / (d * d)
            }
            LawKind::SquareGeometric { p } => {
                let d = 1.0 - p * x;
                (1.0 - p) * x * (2.0 - p * x) / (d * d)
            }
            LawKind::Pmf(q) => q
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c),
        }
    }

    /// Divided difference `(φ(x) − φ(y)) / (x − y)`, evaluated without
    /// cancellation; equals `φ'(x)` when `x == y`.
    pub fn pgf_divided_difference(&self, x: f64, y: f64) -> f64 {
        // h_k(x, y) = Σ_{j=0}^{k} x^j y^{k−j}
        fn complete_homogeneous(x: f64, y: f64, k: u32) -> f64 {
            let mut h = 1.0;
            let mut y_pow = 1.0;
            for _ in 0..k {
                y_pow *= y;
                h = x * h + y_pow;
            }
            h
        }
        match &self.kind {
            LawKind::Deterministic { n } => complete_homogeneous(x, y, *n),
            LawKind::Binary { rho } => rho * (x + y),
            LawKind::Delayed { rho, n } => (1.0 - rho) + rho * complete_homogeneous(x, y, *n),
            LawKind::Geometric { p } => (1.0 - p) * p / ((1.0 - p * x) * (1.0 - p * y)),
            LawKind::ShiftedGeometric { p } => (1.0 - p) / ((1.0 - p * x) * (1.0 - p * y)),
            LawKind::SquareGeometric { p } => {
                (1.0 - p) * (x + y - p * x * y) / ((1.0 - p * x) * (1.0 - p * y))
            }
            LawKind::Pmf(q) => {
                // Σ_k q_k h_{k−1}(x, y), with h_{k−1} = x h_{k−2} + y^{k−1}.
                let mut h = 1.0;
                let mut y_pow = 1.0;
                let mut acc = 0.0;
                for (k, &c) in q.iter().enumerate().skip(1) {
                    if k > 1 {
                        y_pow *= y;
                        h = x * h + y_pow;
                    }
                    acc += c * h;
                }
                acc
            }
        }
    }

    /// The unique `x ∈ [0, 1]` with `φ(x) = y`, for `y ∈ [φ(0), 1]`.
    pub fn pgf_inverse(&self, y: f64) -> Result<f64> {
        let floor = self.pgf_unchecked(0.0);
        if !(y >= floor && y <= 1.0) {
            return Err(Error::Domain(format!(
                "pgf inverse needs y in [φ(0), 1] = [{floor}, 1], got {y}"
            )));
        }
        if y == 1.0 {
            return Ok(1.0);
        }
        bisect(|x| self.pgf_unchecked(x) - y, 0.0, 1.0, 1e-14)
    }

    /// Draws one realisation of `N`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            LawKind::Deterministic { n } => u64::from(*n) + 1,
            LawKind::Binary { rho } => {
                if rng.random::<f64>() < *rho {
                    2
                } else {
                    0
                }
            }
            LawKind::Delayed { rho, n } => {
                if rng.random::<f64>() < *rho {
                    u64::from(*n) + 1
                } else {
                    1
                }
            }
            LawKind::Geometric { p } => geometric_by_inversion(*p, rng),
            LawKind::ShiftedGeometric { p } => 1 + geometric_by_inversion(*p, rng),
            LawKind::SquareGeometric { p } => 2 + geometric_by_inversion(*p, rng),
            LawKind::Pmf(_) => {
                self.alias.as_ref().expect("pmf law carries an alias table").sample(rng) as u64
            }
        }
    }
}

/// `P(G ≥ k) = p^k`, so `G = ⌊ln U / ln p⌋` for `U` uniform on (0, 1).
fn geometric_by_inversion<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.sample(Open01);
    (u.ln() / p.ln()).floor() as u64
}

impl fmt::Display for OffspringLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LawKind::Deterministic { n } => write!(f, "deterministic:n={n}"),
            LawKind::Binary { rho } => write!(f, "binary:rho={rho}"),
            LawKind::Delayed { rho, n } => write!(f, "delayed:rho={rho},n={n}"),
            LawKind::Geometric { p } => write!(f, "geometric:p={p}"),
            LawKind::ShiftedGeometric { p } => write!(f, "shifted-geometric:p={p}"),
            LawKind::SquareGeometric { p } => write!(f, "square-geometric:p={p}"),
            LawKind::Pmf(q) => {
                write!(f, "pmf:")?;
                for (i, v) in q.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `key=value` pairs separated by commas.
pub(crate) fn parse_params(body: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{kv}'")))?;
            Ok((k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

pub(crate) fn lookup<T: FromStr>(params: &[(String, String)], key: &str, ctx: &str) -> Result<T> {
    let raw = params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Parse(format!("{ctx}: missing parameter '{key}'")))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("{ctx}: cannot parse {key}='{raw}'")))
}

impl FromStr for OffspringLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let name = name.trim().to_ascii_lowercase();
        if name == "pmf" {
            let probs = body
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("pmf: cannot parse '{v}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            return OffspringLaw::pmf(probs);
        }
        let params = parse_params(body)?;
        match name.as_str() {
            "deterministic" => OffspringLaw::deterministic(lookup(&params, "n", &name)?),
            "binary" => OffspringLaw::binary(lookup(&params, "rho", &name)?),
            "delayed" => OffspringLaw::delayed(
                lookup(&params, "rho", &name)?,
                lookup(&params, "n", &name)?,
            ),
            "geometric" => OffspringLaw::geometric(lookup(&params, "p", &name)?),
            "shifted-geometric" => OffspringLaw::shifted_geometric(lookup(&params, "p", &name)?),
            "square-geometric" => OffspringLaw::square_geometric(lookup(&params, "p", &name)?),
            other => Err(Error::Parse(format!("unknown offspring law '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_laws() -> Vec<OffspringLaw> {
        vec![
            OffspringLaw::deterministic(1).unwrap(),
            OffspringLaw::deterministic(3).unwrap(),
            OffspringLaw::binary(0.8).unwrap(),
            OffspringLaw::delayed(0.5, 2).unwrap(),
            OffspringLaw::geometric(0.75).unwrap(),
            OffspringLaw::shifted_geometric(0.6).unwrap(),
            OffspringLaw::square_geometric(0.8).unwrap(),
            OffspringLaw::pmf(vec![0.1, 0.2, 0.7]).unwrap(),
        ]
    }

    #[test]
    fn pgf_examples() {
        let d = OffspringLaw::deterministic(1).unwrap();
        assert_eq!(d.pgf(0.5).unwrap(), 0.25);
        let g = OffspringLaw::geometric(0.75).unwrap();
        assert!((g.pgf(0.0).unwrap() - 0.25).abs() < 1e-15);
        for law in all_laws() {
            assert!((law.pgf(1.0).unwrap() - 1.0).abs() < 1e-15, "{law}");
        }
    }

    #[test]
    fn pgf_rejects_out_of_domain() {
        let d = OffspringLaw::deterministic(1).unwrap();
        assert!(matches!(d.pgf(1.5), Err(Error::Domain(_))));
        assert!(matches!(d.pgf(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(OffspringLaw::deterministic(2).unwrap().mean(), 3.0);
        assert!((OffspringLaw::binary(0.8).unwrap().mean() - 1.6).abs() < 1e-15);
        assert!((OffspringLaw::geometric(0.75).unwrap().mean() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn subcritical_laws_rejected() {
        assert!(matches!(OffspringLaw::binary(0.5), Err(Error::Constraint(_))));
        assert!(matches!(OffspringLaw::geometric(0.5), Err(Error::Constraint(_))));
        assert!(OffspringLaw::pmf(vec![0.5, 0.5]).is_err());
        assert!(OffspringLaw::pmf(vec![0.5, 0.6]).is_err());
        assert!(OffspringLaw::deterministic(0).is_err());
    }

    #[test]
    fn factorial_moment_examples() {
        assert_eq!(OffspringLaw::deterministic(1).unwrap().factorial_moment2(), 2.0);
        // Binary ρ = 0.5 has b = 1 and is rejected at construction, so
        // φ''(1) = 2ρ is checked at ρ = 0.75.
        assert!(OffspringLaw::binary(0.5).is_err());
        assert!((OffspringLaw::binary(0.75).unwrap().factorial_moment2() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn geometric_factorial_moment_against_oracles() {
        // Geometric p = 0.5 has b = 1 and is not a valid law; its φ''(1) = 2
        // is checked through the raw formula 2p²/(1−p)² against two oracles.
        let p: f64 = 0.5;
        let pgf = |x: f64| (1.0 - p) / (1.0 - p * x);
        let h = 1e-4;
        let fd = (pgf(1.0) - 2.0 * pgf(1.0 - h) + pgf(1.0 - 2.0 * h)) / (h * h);
        let brute: f64 = (0..=200).map(|n| n as f64 * (n as f64 - 1.0) * (1.0 - p) * p.powi(n)).sum();
        assert!((fd - 2.0).abs() < 1e-2, "{fd}");
        assert!((brute - 2.0).abs() < 1e-12, "{brute}");

        // Same oracles against the implementation for valid geometric-type laws.
        for law in [
            OffspringLaw::geometric(0.75).unwrap(),
            OffspringLaw::shifted_geometric(0.6).unwrap(),
            OffspringLaw::square_geometric(0.8).unwrap(),
        ] {
            let (p, shift) = match law.kind() {
                LawKind::Geometric { p } => (*p, 0),
                LawKind::ShiftedGeometric { p } => (*p, 1),
                LawKind::SquareGeometric { p } => (*p, 2),
                _ => unreachable!(),
            };
            let brute: f64 = (0..=2000)
                .map(|k| {
                    let n = (k + shift) as f64;
                    n * (n - 1.0) * (1.0 - p) * p.powi(k)
                })
                .sum();
            let mean: f64 = (0..=2000)
                .map(|k| (k + shift) as f64 * (1.0 - p) * p.powi(k))
                .sum();
            assert!((law.factorial_moment2() - brute).abs() < 1e-9 * brute, "{law}");
            assert!((law.mean() - mean).abs() < 1e-12 * mean, "{law}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for law in all_laws() {
            for i in 1..10 {
                let x = i as f64 / 10.0;
                let h = 1e-6;
                let fd = (law.pgf_unchecked(x + h) - law.pgf_unchecked(x - h)) / (2.0 * h);
                assert!((fd - law.pgf_derivative(x)).abs() < 1e-7, "{law} at {x}");
            }
            assert!((law.pgf_derivative(1.0) - law.mean()).abs() < 1e-12, "{law}");
        }
    }

    #[test]
    fn divided_difference_matches_definition() {
        for law in all_laws() {
            for &(x, y) in &[(0.2, 0.7), (0.9, 0.1), (0.5, 0.5), (1.0, 0.3)] {
                let dd = law.pgf_divided_difference(x, y);
                let expected = if x == y {
                    law.pgf_derivative(x)
                } else {
                    (law.pgf_unchecked(x) - law.pgf_unchecked(y)) / (x - y)
                };
                assert!((dd - expected).abs() < 1e-12, "{law} ({x},{y}): {dd} vs {expected}");
            }
        }
    }

    #[test]
    fn closed_forms_match_truncated_pmf() {
        let truncate = |p: f64, shift: usize| {
            let mut q = vec![0.0; shift];
            let mut k = 0;
            loop {
                let mass = (1.0 - p) * p.powi(k);
                q.push(mass);
                k += 1;
                if p.powi(k) < 1e-13 {
                    break;
                }
            }
            q
        };
        let cases = vec![
            (OffspringLaw::geometric(0.75).unwrap(), truncate(0.75, 0)),
            (OffspringLaw::shifted_geometric(0.9).unwrap(), truncate(0.9, 1)),
            (OffspringLaw::square_geometric(0.6).unwrap(), truncate(0.6, 2)),
            (OffspringLaw::deterministic(2).unwrap(), vec![0.0, 0.0, 0.0, 1.0]),
            (OffspringLaw::binary(0.8).unwrap(), vec![0.2, 0.0, 0.8]),
            (OffspringLaw::delayed(0.5, 2).unwrap(), vec![0.0, 0.5, 0.0, 0.5]),
        ];
        for (law, probs) in cases {
            let generic = OffspringLaw::pmf(probs).unwrap();
            for i in 0..=10 {
                let x = i as f64 / 10.0;
                let a = law.pgf(x).unwrap();
                let b = generic.pgf(x).unwrap();
                assert!((a - b).abs() < 1e-10, "{law} at {x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        let d = OffspringLaw::deterministic(1).unwrap();
        assert!((d.pgf_inverse(0.25).unwrap() - 0.5).abs() < 1e-14);
        for law in all_laws() {
            assert_eq!(law.pgf_inverse(1.0).unwrap(), 1.0);
        }
        let b = OffspringLaw::binary(0.8).unwrap();
        let expected = (0.3f64 / 0.8).sqrt();
        assert!((b.pgf_inverse(0.5).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.612_372_4).abs() < 1e-7);
        let g = OffspringLaw::geometric(0.75).unwrap();
        assert!(matches!(g.pgf_inverse(0.2), Err(Error::Domain(_))));
        assert!(matches!(g.pgf_inverse(1.1), Err(Error::Domain(_))));
    }

    #[test]
    fn monotone_and_convex_on_grid() {
        for law in all_laws() {
            let vals: Vec<f64> = (0..=10).map(|i| law.pgf(i as f64 / 10.0).unwrap()).collect();
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-15);
            }
            for i in 0..=10 {
                for j in (i + 2..=10).step_by(2) {
                    let mid = (i + j) / 2;
                    assert!(vals[mid] <= 0.5 * (vals[i] + vals[j]) + 1e-15, "{law}");
                }
            }
        }
    }

    #[test]
    fn constant_samplers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = OffspringLaw::deterministic(3).unwrap();
        let b = OffspringLaw::binary(1.0).unwrap();
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), 4);
            assert_eq!(b.sample(&mut rng), 2);
        }
    }

    #[test]
    fn geometric_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let law = OffspringLaw::geometric(0.75).unwrap();
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Var N = p/(1−p)² = 12.
        let se = (12.0f64 / n as f64).sqrt();
        assert!((mean - law.mean()).abs() < 5.0 * se, "mean {mean}");
    }

    #[test]
    fn empirical_pgf_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        for law in all_laws() {
            let draws: Vec<u64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            for x in [0.2, 0.5, 0.8] {
                let emp = draws.iter().map(|&k| f64::powi(x, k as i32)).sum::<f64>() / n as f64;
                let exact = law.pgf(x).unwrap();
                // x^N ∈ [0, 1], so its variance is at most φ(x²) − φ(x)².
                let var = law.pgf(x * x).unwrap() - exact * exact;
                let se = (var / n as f64).sqrt().max(1e-9);
                assert!((emp - exact).abs() <= 5.0 * se, "{law} at {x}: {emp} vs {exact}");
            }
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for text in [
            "deterministic:n=2",
            "binary:rho=0.8",
            "delayed:rho=0.5,n=2",
            "geometric:p=0.75",
            "shifted-geometric:p=0.75",
            "square-geometric:p=0.8",
            "pmf:0.1,0.2,0.7",
        ] {
            let law: OffspringLaw = text.parse().unwrap();
            assert_eq!(law.to_string(), text);
        }
        assert!("poisson:lambda=2".parse::<OffspringLaw>().is_err());
        assert!("binary:p=0.8".parse::<OffspringLaw>().is_err());
        assert!("geometric:p=abc".parse::<OffspringLaw>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_law() -> impl Strategy<Value = OffspringLaw> {
            prop_oneof![
                (1u32..6).prop_map(|n| OffspringLaw::deterministic(n).unwrap()),
                (0.51f64..1.0).prop_map(|r| OffspringLaw::binary(r).unwrap()),
                (0.1f64..1.0, 1u32..5).prop_map(|(r, n)| OffspringLaw::delayed(r, n).unwrap()),
                (0.51f64..0.95).prop_map(|p| OffspringLaw::geometric(p).unwrap()),
                (0.05f64..0.95).prop_map(|p| OffspringLaw::shifted_geometric(p).unwrap()),
                (0.05f64..0.95).prop_map(|p| OffspringLaw::square_geometric(p).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn inverse_undoes_pgf(law in arb_law(), x in 0.0f64..=1.0) {
                let y = law.pgf(x).unwrap();
                let back = law.pgf_inverse(y).unwrap();
                // The inverse is ill-conditioned where φ' vanishes (x → 0 for
                // laws with φ(0) = φ'(0) = 0); compare in the image instead there.
                let slope = law.pgf_derivative(x);
                if slope > 1e-3 {
                    prop_assert!((back - x).abs() < 1e-12, "x={} back={}", x, back);
                } else {
                    prop_assert!((law.pgf(back).unwrap() - y).abs() < 1e-14);
                }
            }

            #[test]
            fn pgf_monotone_convex(law in arb_law(), a in 0.0f64..=1.0, c in 0.0f64..=1.0) {
                let (lo, hi) = if a <= c { (a, c) } else { (c, a) };
                let mid = 0.5 * (lo + hi);
                let (fl, fm, fh) = (law.pgf(lo).unwrap(), law.pgf(mid).unwrap(), law.pgf(hi).unwrap());
                prop_assert!(fl <= fh + 1e-15);
                prop_assert!(fm <= 0.5 * (fl + fh) + 1e-14);
            }
        }
    }
}

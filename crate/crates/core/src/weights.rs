//! The power-law weight family
//! `μ = (1−α)δ₀ + α(1−γ)b^{γ−1}x^{−γ}𝟙(0,b)(x)dx` with `γ = 1 − 1/(αb−1)`.

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::offspring::{lookup, parse_params};
use crate::quad::{integrate, QuadOptions};

/// `E W^k` for the power-law family, also valid for the formal extension
/// `α > 1` used by the analytic solver.
pub fn power_law_moment(alpha: f64, b: f64, k: u32) -> f64 {
    let one_minus_gamma = 1.0 / (alpha * b - 1.0);
    let k = f64::from(k);
    alpha * one_minus_gamma * b.powf(k) / (k + one_minus_gamma)
}

/// A weight law `μ` tied to the offspring mean `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightLaw {
    alpha: f64,
    b: f64,
    gamma: f64,
    // 1/(1−γ) = αb − 1
    exponent: f64,
}

impl WeightLaw {
    /// Builds the law for `P(W ≠ 0) = alpha` and offspring mean `b`.
    pub fn new(alpha: f64, b: f64) -> Result<Self> {
        if !(b > 1.0) || !b.is_finite() {
            return Err(Error::Constraint(format!("b > 1 required, got b = {b}")));
        }
        if !(alpha * b > 1.0) {
            return Err(Error::Constraint(format!(
                "α > 1/b required (αb > 1), got α = {alpha}, b = {b}, αb = {}",
                alpha * b
            )));
        }
        if !(alpha <= 1.0) {
            return Err(Error::Constraint(format!("α ≤ 1 required, got α = {alpha}")));
        }
        let exponent = alpha * b - 1.0;
        Ok(WeightLaw {
            alpha,
            b,
            gamma: 1.0 - 1.0 / exponent,
            exponent,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Maps a uniform `u ∈ (0, 1)` to a weight: `u ≥ α` is the atom at 0,
    /// otherwise `u/α` is inverted through the conditional cdf `(x/b)^{1−γ}`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        if u >= self.alpha {
            return 0.0;
        }
        let v = if self.alpha == 1.0 { u } else { (u / self.alpha).min(ONE_MINUS) };
        self.nonzero_quantile(v)
    }

    /// Inverse of the conditional cdf of `W` given `W > 0`.
    pub fn nonzero_quantile(&self, v: f64) -> f64 {
        let x = if self.exponent == 1.0 {
            self.b * v
        } else {
            self.b * v.powf(self.exponent)
        };
        // Rounding can land on b itself when v is within an ulp of 1.
        x.min(self.b.next_down())
    }

    /// Conditional cdf `(x/b)^{1−γ}` of `W` given `W > 0`.
    pub fn nonzero_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= self.b {
            1.0
        } else {
            (x / self.b).powf(1.0 - self.gamma)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.from_uniform(u)
    }

    /// `E W^k = α(1−γ)b^k/(k+1−γ)`.
    pub fn moment(&self, k: u32) -> f64 {
        power_law_moment(self.alpha, self.b, k)
    }

    /// `E[W log W]` by quadrature after the substitution `x = b·v^{1/(1−γ)}`,
    /// which turns the density into the constant `α` on `v ∈ (0, 1)`.
    pub fn w_log_w(&self) -> Result<f64> {
        let b = self.b;
        let e = self.exponent;
        let r = integrate(
            |v: f64| {
                if v <= 0.0 {
                    return 0.0;
                }
                let x = b * v.powf(e);
                if x > 0.0 {
                    x * x.ln()
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            QuadOptions::abs(1e-13),
        )?;
        Ok(self.alpha * r.value)
    }

    /// `E W² < b`: the martingale is bounded in L².
    pub fn l2_condition(&self) -> bool {
        self.moment(2) < self.b
    }

    /// `E W log W < log b`: uniform integrability of the martingale.
    pub fn kp_condition(&self) -> Result<bool> {
        Ok(self.w_log_w()? < self.b.ln())
    }
}

const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

/// Parses the text form `weights:alpha=<a>` and returns `α`.
pub fn parse_weights_alpha(s: &str) -> Result<f64> {
    let s = s.trim();
    let (name, body) = s.split_once(':').unwrap_or(("weights", s));
    if name.trim() != "weights" {
        return Err(Error::Parse(format!("unknown weight family '{name}'")));
    }
    lookup(&parse_params(body)?, "alpha", "weights")
}

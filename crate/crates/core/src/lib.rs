//! Fixed points of the smoothing transformation
//! `Y =ᵈ b⁻¹ Σ_{j≤N} W_j Y_j`, computed three ways:
//!
//! * [`cascade`]: Monte Carlo samples of the Mandelbrot martingale, by exact
//!   tree recursion or by pool-based iteration of the transform;
//! * [`fixed_point`]: the implicit Laplace-transform equation
//!   `b(1−u)Ω(u) = t` for the power-law weight family;
//! * [`closed_forms`]: six exactly solvable cases.
//!
//! [`verify`] compares the three.

pub mod cascade;
pub mod closed_forms;
pub mod error;
pub mod fixed_point;
pub mod offspring;
pub mod quad;
pub mod roots;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use offspring::{LawKind, OffspringLaw};
pub use weights::WeightLaw;

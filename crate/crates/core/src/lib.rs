//! Reducibility analysis for matrix weights.
//!
//! A matrix weight `W(x)` on an interval is reducible when some constant
//! nonsingular `M` brings `M W(x) M*` to block-diagonal form. The crate
//! decides this through the real commutant space
//! `{T : T W(x) = W(x) T*}`, computed from pointwise samples, from moments,
//! from the monic orthogonal polynomials and from their three-term recursion
//! coefficients, and turns a nontrivial commutant into an explicit block
//! decomposition. Right-acting matrix differential operators are supported
//! for eigenvalue, symmetry and order-zero checks against a weight.

pub mod commutant;
pub mod decompose;
pub mod diffop;
pub mod error;
pub mod hp;
pub mod linalg;
pub mod moments;
pub mod mop;
pub mod quadrature;
pub mod weights;

pub use error::{Error, Result};
pub use linalg::CMat;

/// Default relative tolerance for rank and equality decisions.
pub const DEFAULT_EPS: f64 = 1e-9;

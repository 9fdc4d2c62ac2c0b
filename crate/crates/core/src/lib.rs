//! Allocation-constrained CRRA portfolio optimization in stochastic-factor
//! markets.
//!
//! The value function is sought in the exponentially affine form
//! `G(t, v, z) = v^b / b * exp(A(T - t) + B(T - t)'z)`; the exponents solve a
//! Riccati system whose right-hand side contains a pointwise constrained
//! quadratic program. That program is solved in primal form and its support
//! function multiplier recovered algebraically, which gives the optimal
//! allocation `pi*` together with the dual control `lambda*`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constraints;
pub mod diagnostics;
pub mod dual_inner;
pub mod error;
pub mod markets;
pub mod montecarlo;
pub mod policy;
pub mod riccati;
pub mod testkit;

pub use constraints::ConstraintSet;
pub use error::{Error, Result};
pub use markets::{CoefficientFrame, MarketKind, MarketModel, MarketSpec};

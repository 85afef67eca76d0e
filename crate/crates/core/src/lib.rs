//! Solver and verifier for scalar infinite-horizon optimal control problems
//!
//! ```text
//! max ∫ e^{-θt} u(c, x) dt   s.t.   c + ẋ = f(x, t),   x ≥ 0 (optional)
//! ```
//!
//! The crate computes candidate optimal paths from the first-order
//! (Pontryagin) conditions, checks the hypotheses under which those
//! conditions and the transversality condition are necessary, certifies
//! sufficiency, and cross-checks everything against a brute-force dynamic
//! programming oracle.

// `!(x > 0.0)` is the NaN-rejecting form throughout
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::redundant_guards,
    clippy::type_complexity
)]

pub mod checks;
mod error;
pub mod expr;
pub mod hamiltonian;
mod numeric;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

//! Cutoff policies for the generalized secretary problem.
//!
//! A decision maker interviews `n` applicants in random order, rejects the
//! first `c - 1` unconditionally and then accepts the first applicant who is
//! the best seen so far (the last applicant is accepted if reached). Payoff is
//! a nonincreasing utility `w` of the accepted applicant's relative rank in
//! `[0, 1]`, where **`x = 0` is the best rank**.
//!
//! The crate provides:
//!
//! - [`utility`]: utility families, parsing, and the constants (Lipschitz
//!   constant near the top, bound, mean utility gap) used by the
//!   `O(sqrt n)` cutoff bound.
//! - [`quadrature`]: adaptive Gauss-Legendre integration with mandatory
//!   breakpoints.
//! - [`evaluator`]: exact expected utility `E_c` of a cutoff policy and its
//!   first and second differences in `c`.
//! - [`optimizer`]: optimal cutoff via binary search on the sign of `ΔE_c`,
//!   with a full-scan oracle and the asymptotic upper bound.
//! - [`topk`]: the "accept one of the best k" objective.
//! - [`montecarlo`]: seeded, reproducible simulation of the rank and uniform
//!   type models, top-k trials and order-statistic concentration.
//! - [`sweep`]: scaling experiments over `n` with log-log power-law fits.

pub mod error;
pub mod evaluator;
pub mod format;
pub mod montecarlo;
pub mod optimizer;
pub mod quadrature;
pub mod sweep;
pub mod topk;
pub mod utility;

pub use error::{Error, Result};
pub use evaluator::{PolicyEval, SumStrategy};

pub use optimizer::{CutoffBound, CutoffMethod, CutoffResult};
pub use quadrature::QuadratureConfig;
pub use utility::{UtilityConstants, UtilityFunction, UtilityKind};

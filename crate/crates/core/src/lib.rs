// SPDX-License-Identifier: MIT OR Apache-2.0

//! Concave (or convex) univariate least-squares regression with a pointwise
//! likelihood-ratio test for `H0: r(x0) = y0`.
//!
//! The crate computes the unconstrained concave least-squares estimator and
//! the estimator constrained to pass through `(x0, y0)`, certifies both with
//! independent cumulative-sum optimality checks, and calibrates the
//! likelihood-ratio statistic against a simulated universal limit law
//! obtained from the Brownian-motion white-noise problem.
//!
//! Layout:
//! - [`data_model`]: datasets, the augmented/translated design, piecewise-linear concave functions.
//! - [`cone_qp`]: active-set projection onto the cone of concave vectors.
//! - [`estimators`]: unconstrained and value-constrained fits.
//! - [`characterization`]: cumulative-sum optimality certificates.
//! - [`lrt`]: statistic, test, confidence interval and localization diagnostic.
//! - [`limit_sim`]: the limit problem, its invelope checks and critical-value tables.
//! - [`mc_harness`]: simulation studies (levels, ECDF universality).

#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterization;
pub mod cone_qp;
pub mod data_model;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod limit_sim;
pub mod lrt;
pub mod mc_harness;
mod numeric;

pub use characterization::{check_alse, check_nlse, CharacterizationReport, ConditionCheck, CumSums};
pub use cone_qp::{fenchel_check, generators, project, ConeProblem, ConeSolution, FenchelReport};
pub use data_model::{augment, AugmentedDesign, Design, PiecewiseLinearConcave};
pub use error::{Error, Result};
pub use estimators::{fit_alse, fit_nlse, FitResult, SigmaScale};
pub use exec::Execution;
pub use limit_sim::{CriticalTable, LimitPath};
pub use lrt::{confidence_interval, lr_localization, lr_statistic, lr_test, ConfidenceInterval, LrResult, TestDecision};

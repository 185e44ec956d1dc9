// SPDX-License-Identifier: MIT OR Apache-2.0

//! The limit problem: `X(t) = σ W(t) - 4 a t³` on `[-c, c]`, the discrete
//! invelope fits with and without the pin `r(0) = 0`, draws of the limit
//! statistic, critical-value tables and checks of the invelope conditions.

mod check;
mod invelope;
mod path;
mod rescale;
mod table;

pub use check::{default_invelope_tol, invelope_check, InvelopeCheckReport, InvelopeMode, TAU_KNOT_TOL};
pub use invelope::{dee_draw, dee_from_fits, invelope_constrained, invelope_unconstrained, InvelopeFit};
pub use path::{simulate_path, simulate_path_stream, LimitPath};
pub use rescale::{rescale_canonical, Rescaling};
pub use table::{critical_table, limit_draws, CriticalTable, TableMeta, NEGATIVE_DRAW_TOL};

/// Default half-width of the simulation interval.
pub const DEFAULT_C: f64 = 4.0;
/// Default grid step.
pub const DEFAULT_H: f64 = 0.005;
/// Default half-width of the integration window.
pub const DEFAULT_B: f64 = 3.0;

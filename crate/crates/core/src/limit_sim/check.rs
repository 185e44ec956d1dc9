// SPDX-License-Identifier: MIT OR Apache-2.0

//! Invelope conditions for discrete limit fits.
//!
//! `H - Y` is built on the fit points (cell midpoints, plus 0 when pinned)
//! by cumulative trapezoid sums: `H` as a double cumulative sum of the fit,
//! `Y` as a cumulative sum of `X` (cell averages at the midpoints). The two
//! free ends of the interval play the role of `±c`. On an exact solution
//! of the limit problem every slack vanishes; for discrete fits the slacks
//! are a quadrature error of order `h`.

use serde::{Deserialize, Serialize};

use super::invelope::InvelopeFit;
use super::path::LimitPath;
use crate::data_model::{active_knots, slope_changes};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Default pass tolerance for a grid step `h`.
pub fn default_invelope_tol(h: f64) -> f64 {
    0.2 * h
}

/// Relative slope-change tolerance used to locate `τ_L`, `τ_R`.
pub const TAU_KNOT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvelopeMode {
    Unconstrained,
    Constrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvelopeCheckReport {
    pub mode: InvelopeMode,
    pub tau_left: Option<f64>,
    pub tau_right: Option<f64>,
    /// Constrained: `|(H_R - Y_R)(0) - (H_L - Y_L)(0)|`.
    /// Unconstrained: largest `|H - Y|` at a knot.
    pub middle_gap: f64,
    /// Largest positive part of `H_R - Y_R` on `[0, b]` (of `H - Y` on `[-b, b]` when unconstrained).
    pub max_excursion_right: f64,
    /// Largest positive part of `H_L - Y_L` on `[-b, 0]` (0 when unconstrained).
    pub max_excursion_left: f64,
    /// `Σ (H_R - Y_R) Δr'` over bends in `[0, c]` (over all bends when unconstrained).
    pub integral_right: f64,
    /// `Σ (H_L - Y_L) Δr'` over bends in `[-c, 0]` (0 when unconstrained).
    pub integral_left: f64,
    /// `Σ |Δr'|` over the bends entering `integral_right` / `integral_left`.
    pub bend_mass_right: f64,
    pub bend_mass_left: f64,
    /// No knot was found on one side of 0.
    pub missing_knot: bool,
    pub tolerance: f64,
    pub pass: bool,
}

impl InvelopeCheckReport {
    /// Largest of the condition slacks, with each bend integral divided by
    /// its bend mass (a weighted average of `H - Y` over the bends).
    pub fn max_slack(&self) -> f64 {
        let avg = |v: f64, mass: f64| if mass > 0.0 { v.abs() / mass } else { 0.0 };
        [
            self.middle_gap,
            self.max_excursion_right,
            self.max_excursion_left,
            avg(self.integral_right, self.bend_mass_right),
            avg(self.integral_left, self.bend_mass_left),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

struct FitGrid {
    s: Vec<f64>,
    /// Double primitive of `r` minus primitive of `X`, both from the first point.
    psi: Vec<f64>,
}

fn fit_grid(path: &LimitPath, fit: &InvelopeFit) -> Result<FitGrid> {
    let n = path.half_cells();
    let expected = 2 * n + usize::from(fit.pin.is_some());
    if fit.r.len() != expected || fit.u.len() != expected {
        return Err(Error::invalid(format!("fit has {} points, path needs {expected}", fit.r.len())));
    }
    // X at the fit points: cell averages at midpoints, X(0) = 0 at the pin.
    let mut x: Vec<f64> = path.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if let Some(p) = fit.pin {
        x.insert(p, path.x[n]);
    }
    let s = fit.u.clone();
    let r = &fit.r;
    let mut psi = vec![0.0; s.len()];
    let (mut f, mut p, mut q) = (0.0, 0.0, 0.0);
    for k in 1..s.len() {
        let d = s[k] - s[k - 1];
        let f_next = f + 0.5 * d * (r[k - 1] + r[k]);
        p += 0.5 * d * (f + f_next);
        f = f_next;
        q += 0.5 * d * (x[k - 1] + x[k]);
        psi[k] = p - q;
    }
    Ok(FitGrid { s, psi })
}

/// `psi` minus the line through its values at nodes `a` and `b`.
fn detrend(g: &FitGrid, a: usize, b: usize) -> Vec<f64> {
    let (sa, sb) = (g.s[a], g.s[b]);
    let (pa, pb) = (g.psi[a], g.psi[b]);
    g.s.iter()
        .zip(&g.psi)
        .map(|(s, p)| {
            let lam = (s - sa) / (sb - sa);
            p - ((1.0 - lam) * pa + lam * pb)
        })
        .collect()
}

/// Verifies the discrete invelope conditions for `fit` (constrained iff
/// `fit.pin` is set) on the window `[-b, b]`; passes iff every slack is at
/// most `tol`.
pub fn invelope_check(path: &LimitPath, fit: &InvelopeFit, b: f64, tol: f64) -> Result<InvelopeCheckReport> {
    let g = fit_grid(path, fit)?;
    let last = g.s.len() - 1;
    let bends = slope_changes(&fit.u, &fit.r);
    let knots: Vec<usize> = active_knots(&fit.u, &fit.r, TAU_KNOT_TOL)
        .into_iter()
        .filter(|&i| i != 0 && i + 1 != fit.u.len())
        .collect();
    let positive_max = |d: &[f64], lo: f64, hi: f64| {
        g.s.iter().zip(d).filter(|(s, _)| **s >= lo && **s <= hi).fold(0.0f64, |m, (_, v)| m.max(*v))
    };
    let in_range = |lo: f64, hi: f64| fit.u.iter().enumerate().filter(move |(_, u)| **u >= lo && **u <= hi).map(|(i, _)| i);
    let bend_integral = |d: &[f64], lo: f64, hi: f64| {
        let value = compensated_sum(in_range(lo, hi).map(|i| d[i] * bends[i]));
        (value, compensated_sum(in_range(lo, hi).map(|i| bends[i].abs())))
    };

    let mut report = InvelopeCheckReport {
        mode: if fit.pin.is_some() { InvelopeMode::Constrained } else { InvelopeMode::Unconstrained },
        tau_left: None,
        tau_right: None,
        middle_gap: 0.0,
        max_excursion_right: 0.0,
        max_excursion_left: 0.0,
        integral_right: 0.0,
        integral_left: 0.0,
        bend_mass_right: 0.0,
        bend_mass_left: 0.0,
        missing_knot: false,
        tolerance: tol,
        pass: false,
    };

    if let Some(center) = fit.pin {
        let right = knots.iter().copied().filter(|&i| fit.u[i] >= 0.0).min();
        let left = knots.iter().copied().filter(|&i| fit.u[i] <= 0.0).max();
        report.tau_right = right.map(|i| fit.u[i]);
        report.tau_left = left.map(|i| fit.u[i]);
        let (Some(right), Some(left)) = (right, left) else {
            report.missing_knot = true;
            return Ok(report);
        };
        let d_right = detrend(&g, right, last);
        let d_left = detrend(&g, 0, left);
        report.middle_gap = (d_right[center] - d_left[center]).abs();
        report.max_excursion_right = positive_max(&d_right, 0.0, b);
        report.max_excursion_left = positive_max(&d_left, -b, 0.0);
        (report.integral_right, report.bend_mass_right) = bend_integral(&d_right, 0.0, path.c);
        (report.integral_left, report.bend_mass_left) = bend_integral(&d_left, -path.c, 0.0);
    } else {
        let d = detrend(&g, 0, last);
        report.middle_gap = knots.iter().map(|&i| d[i].abs()).fold(0.0, f64::max);
        report.max_excursion_right = positive_max(&d, -b, b);
        (report.integral_right, report.bend_mass_right) = bend_integral(&d, -path.c, path.c);
    }
    report.pass = !report.missing_knot && report.max_slack() <= tol;
    Ok(report)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cumulative-sum optimality certificates for the unconstrained and the
//! value-constrained fits. These are independent of the solver and serve
//! as its test oracle.

use serde::{Deserialize, Serialize};

use crate::data_model::{active_knots, slope_changes, slope_scale, AugmentedDesign, Design, PiecewiseLinearConcave, KNOT_TOL};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, prefix_sums, CompensatedSum};

/// Partial sums of fitted values and responses.
///
/// Unconstrained: `r_bar[k] = Σ_{i<=k} r_i`, `s_bar[k] = Σ_{i<=k} y_i`.
/// Constrained (translated coordinates): left sums for `k < k0`, right
/// sums `Σ_{i>=k}` for `k > k0`, indexed by position in `z`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CumSums {
    pub r_bar: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub r_left: Vec<f64>,
    pub s_left: Vec<f64>,
    pub r_right: Vec<f64>,
    pub s_right: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub label: String,
    /// Position (0-based) the condition refers to.
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`, accumulated directly from residuals.
    pub slack: f64,
    pub is_knot: bool,
    /// Whether equality (rather than `<=`) was required.
    pub equality: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub conditions: Vec<ConditionCheck>,
    pub sums: CumSums,
    /// Absolute tolerance applied to the weighted-sum conditions.
    pub tolerance: f64,
    pub pass: bool,
}

impl CharacterizationReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.conditions.iter().filter(|c| !c.pass)
    }

    /// Largest violation relative to the tolerance (≤ 1 means pass).
    pub fn worst_ratio(&self) -> f64 {
        self.conditions
            .iter()
            .map(|c| if c.equality { c.slack.abs() } else { c.slack.max(0.0) } / self.tolerance)
            .fold(0.0, f64::max)
    }
}

struct Builder {
    conditions: Vec<ConditionCheck>,
    tol: f64,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, label: &str, index: usize, lhs: f64, rhs: f64, slack: f64, is_knot: bool, equality: bool) {
        self.push_with(label, index, lhs, rhs, slack, is_knot, equality, self.tol);
    }

    #[allow(clippy::too_many_arguments)]
    fn push_with(&mut self, label: &str, index: usize, lhs: f64, rhs: f64, slack: f64, is_knot: bool, equality: bool, tol: f64) {
        let pass = if equality { slack.abs() <= tol } else { slack <= tol };
        self.conditions.push(ConditionCheck { label: label.to_owned(), index, lhs, rhs, slack, is_knot, equality, pass });
    }

    fn concavity(&mut self, z: &[f64], values: &[f64], rel_tol: f64) {
        let limit = rel_tol * slope_scale(z, values);
        let (index, worst) = slope_changes(z, values)
            .into_iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        self.push_with("concavity", index, worst, 0.0, worst, false, false, limit);
    }

    fn finish(self, sums: CumSums) -> CharacterizationReport {
        let pass = self.conditions.iter().all(|c| c.pass);
        CharacterizationReport { conditions: self.conditions, sums, tolerance: self.tol, pass }
    }
}

fn values_on(fit: &PiecewiseLinearConcave, z: &[f64]) -> Result<Vec<f64>> {
    z.iter().map(|&t| fit.evaluate(t)).collect()
}

/// Checks the unconstrained characterization: `R̄_n = S̄_n` and, for every
/// `j >= 1`, `Σ_{k<j} R̄_k Δx_k <= Σ_{k<j} S̄_k Δx_k` with equality at
/// kinks and at the last point. `tol` is relative to
/// `range · Σ(|y| + |r|)`.
pub fn check_alse(design: &Design, fit: &PiecewiseLinearConcave, tol: f64) -> Result<CharacterizationReport> {
    let x = design.x();
    let y = design.y();
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("at least two observations are required"));
    }
    let r = values_on(fit, x)?;
    let mass = compensated_sum(y.iter().chain(&r).map(|v| v.abs()));
    let range = x[n - 1] - x[0];
    let tol_abs = tol * (range * mass).max(f64::MIN_POSITIVE);
    let mut b = Builder { conditions: Vec::with_capacity(n + 1), tol: tol_abs };

    let r_bar = prefix_sums(r.iter().copied());
    let s_bar = prefix_sums(y.iter().copied());
    let e_bar = prefix_sums(r.iter().zip(y).map(|(a, c)| a - c));
    b.push_with("total", n - 1, r_bar[n - 1], s_bar[n - 1], e_bar[n - 1], true, true, tol * mass.max(f64::MIN_POSITIVE));

    let knots = active_knots(x, &r, KNOT_TOL);
    let mut lhs = CompensatedSum::default();
    let mut rhs = CompensatedSum::default();
    let mut slack = CompensatedSum::default();
    for j in 1..n {
        let dx = x[j] - x[j - 1];
        lhs.add(r_bar[j - 1] * dx);
        rhs.add(s_bar[j - 1] * dx);
        slack.add(e_bar[j - 1] * dx);
        let is_knot = j == n - 1 || knots.binary_search(&j).is_ok();
        b.push("cumulative", j, lhs.value(), rhs.value(), slack.value(), is_knot, is_knot);
    }
    b.concavity(x, &r, tol);
    Ok(b.finish(CumSums { r_bar, s_bar, ..Default::default() }))
}

/// Checks the constrained characterization in translated coordinates:
/// the left inequalities for `1 <= j <= k0`, the right inequalities for
/// `k0 < j < n0 - 1`, equality at kinks, and the equality connecting both
/// sides. `fit` is in original coordinates on `aug.z`.
pub fn check_nlse(aug: &AugmentedDesign, fit: &PiecewiseLinearConcave, tol: f64) -> Result<CharacterizationReport> {
    let z = &aug.z;
    let m = z.len();
    let k0 = aug.k0;
    if m < 2 || aug.w.len() != m || k0 >= m {
        return Err(Error::invalid("augmented design is inconsistent"));
    }
    let values = values_on(fit, z)?;
    let r: Vec<f64> = values.iter().map(|v| v - aug.y0).collect();
    let w = &aug.w;
    let mass = compensated_sum(w.iter().chain(&r).map(|v| v.abs()));
    let range = z[m - 1] - z[0];
    let tol_abs = tol * (range * mass).max(f64::MIN_POSITIVE);
    let mut b = Builder { conditions: Vec::with_capacity(m + 2), tol: tol_abs };
    let knots = active_knots(z, &r, KNOT_TOL);
    let is_knot = |j: usize| knots.binary_search(&j).is_ok() && j != 0 && j != m - 1;

    b.push_with("pin", k0, values[k0], aug.y0, values[k0] - aug.y0, true, true, 0.0);

    // Left side: sums over positions 0..k0.
    let r_left = prefix_sums(r[..k0].iter().copied());
    let s_left = prefix_sums(w[..k0].iter().copied());
    let e_left = prefix_sums(r[..k0].iter().zip(&w[..k0]).map(|(a, c)| a - c));
    let mut lhs = CompensatedSum::default();
    let mut rhs = CompensatedSum::default();
    let mut slack = CompensatedSum::default();
    for j in 1..=k0 {
        let dz = z[j] - z[j - 1];
        lhs.add(r_left[j - 1] * dz);
        rhs.add(s_left[j - 1] * dz);
        slack.add(e_left[j - 1] * dz);
        let knot = is_knot(j);
        b.push("left", j, lhs.value(), rhs.value(), slack.value(), knot, knot);
    }
    let (left_lhs, left_rhs, left_slack) = (lhs.value(), rhs.value(), slack.value());

    // Right side: suffix sums over positions k0+1..m.
    let suffix = |v: &mut dyn Iterator<Item = f64>| {
        let mut out: Vec<f64> = prefix_sums(v);
        out.reverse();
        out
    };
    let r_right = suffix(&mut r[k0 + 1..].iter().rev().copied());
    let s_right = suffix(&mut w[k0 + 1..].iter().rev().copied());
    let e_right = suffix(&mut r[k0 + 1..].iter().zip(&w[k0 + 1..]).rev().map(|(a, c)| a - c));
    let at = |k: usize| k - (k0 + 1);
    let mut lhs = CompensatedSum::default();
    let mut rhs = CompensatedSum::default();
    let mut slack = CompensatedSum::default();
    let mut right_checks = Vec::new();
    for j in (k0 + 1..m.saturating_sub(1)).rev() {
        let k = j + 1;
        let dz = z[k] - z[k - 1];
        lhs.add(r_right[at(k)] * dz);
        rhs.add(s_right[at(k)] * dz);
        slack.add(e_right[at(k)] * dz);
        right_checks.push((j, lhs.value(), rhs.value(), slack.value()));
    }
    for (j, l, rr, s) in right_checks.into_iter().rev() {
        let knot = is_knot(j);
        b.push("right", j, l, rr, s, knot, knot);
    }
    // Full right sum includes the k = k0 + 1 term.
    if k0 + 1 < m {
        let dz = z[k0 + 1] - z[k0];
        lhs.add(r_right[0] * dz);
        rhs.add(s_right[0] * dz);
        slack.add(e_right[0] * dz);
    }
    let (right_lhs, right_rhs, right_slack) = (lhs.value(), rhs.value(), slack.value());
    b.push(
        "connect",
        k0,
        left_lhs - left_rhs,
        right_lhs - right_rhs,
        left_slack - right_slack,
        true,
        true,
    );
    b.concavity(z, &r, tol);
    Ok(b.finish(CumSums { r_left, s_left, r_right, s_right, ..Default::default() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::augment;
    use crate::estimators::{fit_alse, fit_nlse};
    use approx::assert_abs_diff_eq;

    fn design(x: &[f64], y: &[f64]) -> Design {
        Design::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn plc(k: &[f64], v: &[f64]) -> PiecewiseLinearConcave {
        PiecewiseLinearConcave::new(k.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn interpolating_fit_passes() {
        let d = design(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 3.0, 3.5]);
        let report = check_alse(&d, &plc(d.x(), d.y()), 1e-10).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn valley_hand_sums() {
        let d = design(&[0.0, 1.0, 2.0], &[0.0, -1.0, 0.0]);
        let third = -1.0 / 3.0;
        let report = check_alse(&d, &plc(d.x(), &[third; 3]), 1e-12).unwrap();
        assert!(report.pass);
        assert_abs_diff_eq!(report.sums.r_bar[1], -2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(report.sums.s_bar, vec![0.0, -1.0, -1.0]);
        let first = &report.conditions[1];
        assert_eq!((first.index, first.is_knot), (1, false));
        assert_abs_diff_eq!(first.slack, -1.0 / 3.0, epsilon = 1e-15);
        let last = &report.conditions[2];
        assert!(last.is_knot && last.slack.abs() < 1e-15);
    }

    #[test]
    fn perturbed_fit_fails() {
        let d = design(&[0.0, 1.0, 2.0], &[0.0, -1.0, 0.0]);
        let third = -1.0 / 3.0;
        let report = check_alse(&d, &plc(d.x(), &[third, third + 1e-3, third]), 1e-8).unwrap();
        assert!(!report.pass);
        assert!(report.failures().any(|c| c.label == "total"));
    }

    #[test]
    fn zero_nlse_passes() {
        let d = design(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
        for x0 in [0.0, 0.5, 1.0, 3.0] {
            let aug = augment(&d, x0, 0.0).unwrap();
            let fit = plc(&aug.z, &vec![0.0; aug.z.len()]);
            assert!(check_nlse(&aug, &fit, 1e-10).unwrap().pass);
        }
    }

    #[test]
    fn three_point_constrained_example() {
        let d = design(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]);
        let aug = augment(&d, 1.0, 0.0).unwrap();
        let report = check_nlse(&aug, &plc(&aug.z, &[0.0; 3]), 1e-12).unwrap();
        assert!(report.pass);
        assert_eq!(report.sums.s_left, vec![1.0]);
        assert_eq!(report.sums.s_right, vec![1.0]);
        let connect = report.conditions.iter().find(|c| c.label == "connect").unwrap();
        assert_eq!((connect.lhs, connect.rhs), (-1.0, -1.0));
    }

    #[test]
    fn alse_fails_as_nlse() {
        let d = design(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 1.5, 1.0]);
        let alse = fit_alse(&d).unwrap();
        let aug = augment(&d, 1.0, 0.0).unwrap();
        let report = check_nlse(&aug, &alse.fit, 1e-8).unwrap();
        assert!(!report.pass);
        // After shifting the pin into place the connect equality is the one that breaks.
        let shifted = alse.fit.map_values(|v| v - 1.0);
        let aug = augment(&d, 1.0, 0.0).unwrap();
        let report = check_nlse(&aug, &shifted, 1e-8).unwrap();
        assert!(report.failures().any(|c| c.label == "connect"));
    }

    #[test]
    fn solver_outputs_pass() {
        let x: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin() + i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -(v - 12.0).powi(2) / 20.0 + (v * 7.3).cos()).collect();
        let d = design(&x, &y);
        let alse = fit_alse(&d).unwrap();
        assert!(check_alse(&d, &alse.fit, 1e-7).unwrap().pass);
        for (x0, y0) in [(5.5, 0.3), (12.0, -3.0), (x[0], 0.0), (30.0, 2.0)] {
            let nlse = fit_nlse(&d, x0, y0).unwrap();
            let aug = augment(&d, x0, y0).unwrap();
            let report = check_nlse(&aug, &nlse.fit, 1e-7).unwrap();
            assert!(report.pass, "{x0} {y0}: {:?}", report.failures().collect::<Vec<_>>());
        }
    }
}

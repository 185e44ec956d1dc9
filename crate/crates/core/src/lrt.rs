// SPDX-License-Identifier: MIT OR Apache-2.0

//! Likelihood-ratio statistic for `H0: r(x0) = y0`, the test against
//! simulated critical values, confidence intervals by test inversion and
//! the local/remote split of the statistic.

use serde::{Deserialize, Serialize};

use crate::data_model::{augment, Design, PiecewiseLinearConcave};
use crate::error::{Error, Result};
use crate::estimators::{fit_alse, fit_nlse, FitResult};
use crate::exec::Execution;
use crate::limit_sim::CriticalTable;
use crate::numeric::compensated_sum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrResult {
    pub x0: f64,
    pub y0: f64,
    /// `2 (φ(r̂⁰) - φ(r̂))`.
    pub two_log_lambda: f64,
    pub alse: FitResult,
    pub nlse: FitResult,
    pub sigma2_used: f64,
    /// Whether `sigma2_used` was supplied rather than estimated.
    pub sigma2_known: bool,
    /// `|2 log λ - Σ (r̃² - (r̃⁰)²)|` in coordinates translated by `y0`.
    pub identity_gap: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestDecision {
    Reject,
    FailToReject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    /// `σ² · d_{1-α}`.
    pub threshold: f64,
    /// Fraction of limit draws at least `statistic / σ²`.
    pub p_value: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub decision: TestDecision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSplit {
    pub b: f64,
    /// Window `[x0 - b n^{-1/5}, x0 + b n^{-1/5}]`.
    pub window: (f64, f64),
    /// Part of `Σ (r̃² - (r̃⁰)²)` from observations inside the window.
    pub d_nb: f64,
    /// Part from observations outside the window.
    pub e_nb: f64,
    pub two_log_lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Defaults to the unconstrained fit at `x0`.
    pub center: Option<f64>,
    /// Defaults to `10 σ̂ n^{-2/5}`; doubled until both ends are rejected.
    pub half_width: Option<f64>,
    pub points: usize,
    /// Bisection width for the interval ends; defaults to `1e-4 σ̂`.
    pub resolution: Option<f64>,
    pub max_doublings: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { center: None, half_width: None, points: 201, resolution: None, max_doublings: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub x0: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub sigma2: f64,
    pub grid: Vec<f64>,
    pub statistics: Vec<f64>,
    pub acceptance_flags: Vec<bool>,
    /// Accepted grid values are not contiguous (the hull is reported).
    pub nonconvex_warning: bool,
    pub warnings: Vec<String>,
}

impl ConfidenceInterval {
    /// The interval for the negated responses (convex regression).
    pub fn negated(&self) -> Self {
        let rev = |v: &[f64], f: fn(f64) -> f64| v.iter().rev().map(|x| f(*x)).collect::<Vec<_>>();
        Self {
            lower: -self.upper,
            upper: -self.lower,
            grid: rev(&self.grid, |x| -x),
            statistics: rev(&self.statistics, |x| x),
            acceptance_flags: self.acceptance_flags.iter().rev().copied().collect(),
            ..self.clone()
        }
    }
}

/// Unconstrained fit and variance shared by every `y0` at a fixed design.
#[derive(Clone, Debug)]
pub struct LrContext<'a> {
    design: &'a Design,
    alse: FitResult,
    sigma2: f64,
    sigma2_known: bool,
}

impl<'a> LrContext<'a> {
    pub fn new(design: &'a Design, sigma2: Option<f64>) -> Result<Self> {
        if let Some(s) = sigma2 {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma2={s} must be finite and nonnegative")));
            }
        }
        let alse = fit_alse(design)?;
        let sigma2_known = sigma2.is_some();
        let sigma2 = sigma2.unwrap_or(alse.sigma2_hat);
        Ok(Self { design, alse, sigma2, sigma2_known })
    }

    pub fn alse(&self) -> &FitResult {
        &self.alse
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// The unconstrained fit at `x0`, extrapolating the end segments.
    pub fn alse_at(&self, x0: f64) -> f64 {
        extrapolate(&self.alse.fit, x0)
    }

    pub fn statistic(&self, x0: f64, y0: f64) -> Result<LrResult> {
        let mut warnings = Vec::new();
        let aug = augment(self.design, x0, y0)?;
        if aug.is_exterior() {
            warnings.push(format!("x0={x0} lies outside the design range"));
        }
        // When the unconstrained fit already passes through (x0, y0) it is
        // the constrained fit as well.
        let nlse = match self.alse.fit.evaluate(x0) {
            Ok(v) if v == y0 => {
                let values = aug.z.iter().map(|&t| self.alse.fit.evaluate(t)).collect::<Result<Vec<_>>>()?;
                let mut fit = self.alse.clone();
                fit.fit = PiecewiseLinearConcave::from_parts_unchecked(aug.z.clone(), values);
                fit
            }
            _ => fit_nlse(self.design, x0, y0)?,
        };
        let two_log_lambda = 2.0 * (nlse.objective - self.alse.objective);
        let free = self.alse.fitted_at_data(self.design);
        let pinned = nlse.fitted_at_data(self.design);
        let identity = compensated_sum(free.iter().zip(&pinned).map(|(a, b)| {
            let (a, b) = (a - y0, b - y0);
            a * a - b * b
        }));
        if nlse.near_degenerate {
            warnings.push("constrained fit has a nearly flat knot".to_owned());
        }
        Ok(LrResult {
            x0,
            y0,
            two_log_lambda,
            identity_gap: (two_log_lambda - identity).abs(),
            alse: self.alse.clone(),
            nlse,
            sigma2_used: self.sigma2,
            sigma2_known: self.sigma2_known,
            warnings,
        })
    }
}

fn extrapolate(fit: &PiecewiseLinearConcave, t: f64) -> f64 {
    let k = fit.knots();
    let v = fit.values();
    let m = k.len();
    if t < k[0] {
        v[0] + (t - k[0]) * (v[1] - v[0]) / (k[1] - k[0])
    } else if t > k[m - 1] {
        v[m - 1] + (t - k[m - 1]) * (v[m - 1] - v[m - 2]) / (k[m - 1] - k[m - 2])
    } else {
        fit.evaluate(t).expect("inside the domain")
    }
}

/// Computes `2 log λ_n(y0)`; `sigma2 = None` uses the unconstrained residual mean square.
pub fn lr_statistic(design: &Design, x0: f64, y0: f64, sigma2: Option<f64>) -> Result<LrResult> {
    LrContext::new(design, sigma2)?.statistic(x0, y0)
}

/// Compares `statistic` with `σ² d_{1-α}`.
pub fn decide(statistic: f64, sigma2: f64, alpha: f64, table: &CriticalTable) -> Result<TestOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha={alpha} must lie in (0, 1)")));
    }
    let threshold = sigma2 * table.quantile(1.0 - alpha);
    let p_value = if sigma2 > 0.0 {
        table.upper_tail(statistic / sigma2)
    } else if statistic > 0.0 {
        0.0
    } else {
        1.0
    };
    let decision = if statistic > threshold { TestDecision::Reject } else { TestDecision::FailToReject };
    Ok(TestOutcome { statistic, threshold, p_value, sigma2, alpha, decision })
}

/// Level-`alpha` likelihood-ratio test of `r(x0) = y0`.
pub fn lr_test(
    design: &Design,
    x0: f64,
    y0: f64,
    alpha: f64,
    table: &CriticalTable,
    sigma2: Option<f64>,
) -> Result<(TestOutcome, LrResult)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha={alpha} must lie in (0, 1)")));
    }
    let lr = lr_statistic(design, x0, y0, sigma2)?;
    Ok((decide(lr.two_log_lambda, lr.sigma2_used, alpha, table)?, lr))
}

/// Splits `Σ (r̃² - (r̃⁰)²)` into observations within `b n^{-1/5}` of `x0` and the rest.
pub fn lr_localization(design: &Design, x0: f64, y0: f64, b: f64) -> Result<LocalizationSplit> {
    let lr = lr_statistic(design, x0, y0, None)?;
    localization_of(&lr, design, b)
}

pub fn localization_of(lr: &LrResult, design: &Design, b: f64) -> Result<LocalizationSplit> {
    if !(b > 0.0) {
        return Err(Error::invalid(format!("b={b} must be positive")));
    }
    let n = design.len() as f64;
    let half = b * n.powf(-0.2);
    let window = (lr.x0 - half, lr.x0 + half);
    let free = lr.alse.fitted_at_data(design);
    let pinned = lr.nlse.fitted_at_data(design);
    let term = |i: usize| {
        let (a, c) = (free[i] - lr.y0, pinned[i] - lr.y0);
        a * a - c * c
    };
    let inside = |i: usize| design.x()[i] >= window.0 && design.x()[i] <= window.1;
    let d_nb = compensated_sum((0..design.len()).filter(|&i| inside(i)).map(term));
    let e_nb = compensated_sum((0..design.len()).filter(|&i| !inside(i)).map(term));
    Ok(LocalizationSplit { b, window, d_nb, e_nb, two_log_lambda: lr.two_log_lambda })
}

/// Confidence interval `{y : 2 log λ_n(y) <= σ² d_{1-α}}` by scanning a
/// grid of `y` values and bisecting both ends.
pub fn confidence_interval(
    design: &Design,
    x0: f64,
    alpha: f64,
    table: &CriticalTable,
    grid: &GridSpec,
    sigma2: Option<f64>,
    exec: Execution,
) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha={alpha} must lie in (0, 1)")));
    }
    if grid.points < 3 {
        return Err(Error::invalid("the confidence grid needs at least three points"));
    }
    let ctx = LrContext::new(design, sigma2)?;
    let sigma2 = ctx.sigma2();
    let threshold = sigma2 * table.quantile(1.0 - alpha);
    let stat = |y: f64| ctx.statistic(x0, y).map(|r| r.two_log_lambda);
    let accepted = |y: f64| stat(y).map(|s| s <= threshold);

    let center = grid.center.unwrap_or_else(|| ctx.alse_at(x0));
    let n = design.len() as f64;
    let sigma = sigma2.sqrt();
    let scale = compensated_sum(design.y().iter().map(|v| v.abs())) / n;
    let mut half_width = grid.half_width.unwrap_or(10.0 * sigma * n.powf(-0.4));
    if !(half_width > 0.0) {
        half_width = 1e-6 * scale.max(center.abs()).max(1e-12);
    }
    let resolution = grid.resolution.unwrap_or(1e-4 * sigma).max(1e-12 * scale.max(center.abs()).max(1.0));

    let mut warnings = Vec::new();
    let mut doublings = 0;
    while accepted(center - half_width)? || accepted(center + half_width)? {
        if doublings == grid.max_doublings {
            warnings.push(format!("acceptance region not bracketed after {doublings} doublings"));
            break;
        }
        half_width *= 2.0;
        doublings += 1;
    }

    let m = grid.points;
    let values: Vec<f64> =
        (0..m).map(|i| center - half_width + 2.0 * half_width * i as f64 / (m - 1) as f64).collect();
    let statistics = exec.try_map_indexed(m, |i| stat(values[i]))?;
    let flags: Vec<bool> = statistics.iter().map(|s| *s <= threshold).collect();
    let (Some(first), Some(last)) = (flags.iter().position(|f| *f), flags.iter().rposition(|f| *f)) else {
        return Err(Error::EmptyAcceptance { half_width });
    };
    let nonconvex_warning = flags[first..=last].iter().any(|f| !f);
    if nonconvex_warning {
        warnings.push("accepted values are not contiguous; reporting their hull".to_owned());
    }

    // Bisect between a rejected and an accepted value, keeping the accepted end.
    let refine = |mut rejected: f64, mut inside: f64| -> Result<f64> {
        while (inside - rejected).abs() > resolution {
            let mid = 0.5 * (inside + rejected);
            if accepted(mid)? {
                inside = mid;
            } else {
                rejected = mid;
            }
        }
        Ok(inside)
    };
    let lower = if first > 0 { refine(values[first - 1], values[first])? } else { values[first] };
    let upper = if last + 1 < m { refine(values[last + 1], values[last])? } else { values[last] };
    Ok(ConfidenceInterval {
        x0,
        lower,
        upper,
        alpha,
        threshold,
        sigma2,
        grid: values,
        statistics,
        acceptance_flags: flags,
        nonconvex_warning,
        warnings,
    })
}

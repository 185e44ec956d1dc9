// SPDX-License-Identifier: MIT OR Apache-2.0

//! Unconstrained (ALSE) and value-constrained (NLSE) concave least-squares fits.

use serde::{Deserialize, Serialize};

use crate::cone_qp::{project, ConeProblem};
use crate::data_model::{augment, AugmentedDesign, Design, PiecewiseLinearConcave};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Concavity tolerance accepted on solver output before it is wrapped.
const OUTPUT_CONCAVITY_TOL: f64 = 1e-7;

/// Divisor used for the residual variance estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaScale {
    /// `Σ e² / n`.
    #[default]
    N,
    /// `Σ e² / (n - p)` with `p` the number of linear pieces plus one.
    NMinusKnots,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// The fit in original coordinates. Knots are the design abscissas, plus
    /// `x0` for a constrained fit when `x0` is not a design point.
    pub fit: PiecewiseLinearConcave,
    /// `½ Σ_i (y_i - r(x_i))²` over observations.
    pub objective: f64,
    /// `y_i - r(x_i)` for each observation, in design order.
    pub residuals: Vec<f64>,
    pub sigma2_hat: f64,
    /// Interior abscissas where the fit bends.
    pub kinks: Vec<f64>,
    pub iterations: usize,
    pub near_degenerate: bool,
}

impl FitResult {
    /// Fitted values at the observations.
    pub fn fitted_at_data(&self, design: &Design) -> Vec<f64> {
        design.y().iter().zip(&self.residuals).map(|(y, e)| y - e).collect()
    }

    pub fn sigma2_with(&self, scale: SigmaScale) -> f64 {
        let n = self.residuals.len();
        let ss = compensated_sum(self.residuals.iter().map(|e| e * e));
        let dof = match scale {
            SigmaScale::N => n,
            SigmaScale::NMinusKnots => n.saturating_sub(self.kinks.len() + 2).max(1),
        };
        ss / dof as f64
    }
}

/// Concave least-squares fit over the design abscissas.
pub fn fit_alse(design: &Design) -> Result<FitResult> {
    fit_alse_with(design, SigmaScale::N)
}

pub fn fit_alse_with(design: &Design, scale: SigmaScale) -> Result<FitResult> {
    let n = design.len();
    if n < 2 {
        return Err(Error::invalid("at least two observations are required"));
    }
    let problem = ConeProblem::new(design.x().to_vec(), vec![1.0; n], design.y().to_vec(), None)?;
    let solution = project(&problem)?;
    let residuals: Vec<f64> = design.y().iter().zip(&solution.fitted).map(|(y, f)| y - f).collect();
    let kinks = solution.knots.iter().map(|&j| design.x()[j]).collect();
    let fit = wrap(design.x().to_vec(), solution.fitted)?;
    Ok(finish(fit, solution.objective, residuals, kinks, solution.iterations, solution.near_degenerate, scale))
}

/// Concave least-squares fit constrained to pass through `(x0, y0)`.
pub fn fit_nlse(design: &Design, x0: f64, y0: f64) -> Result<FitResult> {
    let aug = augment(design, x0, y0)?;
    fit_nlse_augmented(&aug, design)
}

/// Constrained fit on an already augmented design.
pub fn fit_nlse_augmented(aug: &AugmentedDesign, design: &Design) -> Result<FitResult> {
    let problem = ConeProblem::new(aug.z.clone(), aug.weights(), aug.w.clone(), Some(aug.k0))?;
    let solution = project(&problem)?;
    let translated = &solution.fitted;
    // The solver minimized over translated responses; that is the objective reported.
    let objective = 0.5
        * compensated_sum(aug.data_index.iter().map(|&i| {
            let e = aug.w[i] - translated[i];
            e * e
        }));
    let values: Vec<f64> = translated.iter().map(|v| v + aug.y0).collect();
    let residuals: Vec<f64> =
        aug.data_index.iter().zip(design.y()).map(|(&i, y)| y - values[i]).collect();
    let kinks = solution.knots.iter().map(|&j| aug.z[j]).collect();
    let fit = wrap(aug.z.clone(), values)?;
    Ok(finish(fit, objective, residuals, kinks, solution.iterations, solution.near_degenerate, SigmaScale::N))
}

fn wrap(knots: Vec<f64>, values: Vec<f64>) -> Result<PiecewiseLinearConcave> {
    PiecewiseLinearConcave::with_tolerance(knots, values, OUTPUT_CONCAVITY_TOL)
        .map_err(|e| Error::numerical(format!("solver output failed the concavity check: {e}")))
}

fn finish(
    fit: PiecewiseLinearConcave,
    objective: f64,
    residuals: Vec<f64>,
    kinks: Vec<f64>,
    iterations: usize,
    near_degenerate: bool,
    scale: SigmaScale,
) -> FitResult {
    let mut out = FitResult { fit, objective, residuals, sigma2_hat: 0.0, kinks, iterations, near_degenerate };
    out.sigma2_hat = out.sigma2_with(scale);
    out
}

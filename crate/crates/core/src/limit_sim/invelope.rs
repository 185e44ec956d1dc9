// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::path::LimitPath;
use crate::cone_qp::{project, ConeProblem};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Discrete second derivative of the invelope: a concave vector on the cell
/// midpoints of a path, plus the point 0 when constrained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvelopeFit {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    /// Position of the pinned point `u = 0` (constrained fits only).
    pub pin: Option<usize>,
    /// `½ Σ h (ΔX/h - r)²` over the cells.
    pub objective: f64,
    /// Interior positions where the fit bends.
    pub knots: Vec<usize>,
}

impl InvelopeFit {
    /// Fitted values at the cell midpoints only.
    pub fn cell_values(&self) -> Vec<f64> {
        match self.pin {
            None => self.r.clone(),
            Some(p) => self.r.iter().enumerate().filter(|&(j, _)| j != p).map(|(_, v)| *v).collect(),
        }
    }
}

fn fit(path: &LimitPath, constrained: bool) -> Result<InvelopeFit> {
    let n = path.half_cells();
    let mut u = path.midpoints();
    let mut targets = path.slopes();
    let mut weights = vec![path.h; u.len()];
    let pin = constrained.then_some(n);
    if constrained {
        u.insert(n, 0.0);
        targets.insert(n, 0.0);
        weights.insert(n, 0.0);
    }
    let problem = ConeProblem::new(u.clone(), weights, targets, pin)?;
    let solution = project(&problem)?;
    Ok(InvelopeFit { u, r: solution.fitted, pin, objective: solution.objective, knots: solution.knots })
}

/// Least-squares concave fit to the increment slopes `ΔX / h` with weights `h`.
pub fn invelope_unconstrained(path: &LimitPath) -> Result<InvelopeFit> {
    fit(path, false)
}

/// As [`invelope_unconstrained`], with the fit pinned to 0 at `u = 0`.
pub fn invelope_constrained(path: &LimitPath) -> Result<InvelopeFit> {
    fit(path, true)
}

/// `Σ h (r̂² - (r̂⁰)²)` over cells with `|u| <= b`.
pub fn dee_from_fits(alse: &InvelopeFit, nlse: &InvelopeFit, h: f64, b: f64) -> f64 {
    let free = alse.cell_values();
    let pinned = nlse.cell_values();
    let half = free.len() / 2;
    compensated_sum((0..free.len()).filter_map(|j| {
        let u = (j as f64 + 0.5 - half as f64) * h;
        (u.abs() <= b).then(|| h * (free[j] * free[j] - pinned[j] * pinned[j]))
    }))
}

/// One draw of the limit statistic from `path`, integrated over `[-b, b]`.
pub fn dee_draw(path: &LimitPath, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < path.c) {
        return Err(Error::invalid(format!("window b={b} must lie in (0, c={})", path.c)));
    }
    let alse = invelope_unconstrained(path)?;
    let nlse = invelope_constrained(path)?;
    Ok(dee_from_fits(&alse, &nlse, path.h, b))
}

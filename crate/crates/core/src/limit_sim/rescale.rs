// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::invelope::InvelopeFit;
use crate::error::{Error, Result};

/// Scale factors relating the `(a, σ)` limit problem to the canonical one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Rescaling {
    /// `γ₁ = (a/σ)^{3/5} / σ`, `γ₂ = (σ/a)^{2/5}`.
    pub fn new(a: f64, sigma: f64) -> Result<Self> {
        if !(a > 0.0 && sigma > 0.0 && a.is_finite() && sigma.is_finite()) {
            return Err(Error::invalid(format!("a={a} and sigma={sigma} must be positive")));
        }
        let gamma1 = (a / sigma).powf(0.6) / sigma;
        let gamma2 = (sigma / a).powf(0.4);
        let identity = gamma1 * gamma2.powf(1.5) * sigma;
        if (identity - 1.0).abs() > 1e-12 {
            return Err(Error::numerical(format!("γ₁ γ₂^(3/2) σ = {identity}, expected 1")));
        }
        Ok(Self { gamma1, gamma2 })
    }

    /// Factor applied to values: `γ₁ γ₂²`.
    pub fn value_factor(&self) -> f64 {
        self.gamma1 * self.gamma2 * self.gamma2
    }
}

/// Maps a fit `r(t)` of the `(a, σ)` problem to `γ₁ γ₂² r(γ₂ u)`, a fit of
/// the canonical problem `a = σ = 1`.
pub fn rescale_canonical(fit: &InvelopeFit, a: f64, sigma: f64) -> Result<InvelopeFit> {
    let s = Rescaling::new(a, sigma)?;
    let factor = s.value_factor();
    Ok(InvelopeFit {
        u: fit.u.iter().map(|t| t / s.gamma2).collect(),
        r: fit.r.iter().map(|v| v * factor).collect(),
        pin: fit.pin,
        objective: fit.objective / (sigma * sigma),
        knots: fit.knots.clone(),
    })
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `X(t) = σ W(t) - 4 a t³` sampled on `t_j = -c + j h`, `j = 0..=2N`, `N = c / h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitPath {
    pub c: f64,
    pub h: f64,
    pub a: f64,
    pub sigma: f64,
    pub seed: u64,
    pub stream: u64,
    /// Values at the grid points; `x[N] == 0`.
    pub x: Vec<f64>,
}

impl LimitPath {
    /// Number of cells on each side of 0.
    pub fn half_cells(&self) -> usize {
        (self.x.len() - 1) / 2
    }

    pub fn t(&self, j: usize) -> f64 {
        (j as f64 - self.half_cells() as f64) * self.h
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.x.len()).map(|j| self.t(j)).collect()
    }

    /// Cell midpoints `-c + (j + ½) h`.
    pub fn midpoints(&self) -> Vec<f64> {
        let n = self.half_cells() as f64;
        (0..self.x.len() - 1).map(|j| (j as f64 + 0.5 - n) * self.h).collect()
    }

    /// Increment slopes `(X(t_{j+1}) - X(t_j)) / h`.
    pub fn slopes(&self) -> Vec<f64> {
        self.x.windows(2).map(|w| (w[1] - w[0]) / self.h).collect()
    }

    /// The same path observed on every second grid point (step `2h`).
    pub fn coarsen(&self) -> Result<Self> {
        let n = self.half_cells();
        if !n.is_multiple_of(2) {
            return Err(Error::invalid("coarsening needs an even number of cells per side"));
        }
        Ok(Self { h: 2.0 * self.h, x: self.x.iter().step_by(2).copied().collect(), ..self.clone() })
    }
}

pub(crate) fn half_cells(c: f64, h: f64) -> Result<usize> {
    if !(c > 0.0 && h > 0.0 && c.is_finite() && h.is_finite()) {
        return Err(Error::invalid(format!("c={c} and h={h} must be positive")));
    }
    let ratio = c / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(Error::invalid(format!("c / h = {ratio} must be a positive integer")));
    }
    Ok(n as usize)
}

/// Simulates one path with replication stream 0.
pub fn simulate_path(c: f64, h: f64, a: f64, sigma: f64, seed: u64) -> Result<LimitPath> {
    simulate_path_stream(c, h, a, sigma, seed, 0)
}

/// Simulates the path of replication `stream`: the generator is seeded with
/// `seed` and switched to stream `stream`, so each replication's draws do
/// not depend on how replications are scheduled.
///
/// The path is built outward from `X(0) = 0`: first the `N` increments to
/// the right, then the `N` to the left.
pub fn simulate_path_stream(c: f64, h: f64, a: f64, sigma: f64, seed: u64, stream: u64) -> Result<LimitPath> {
    let n = half_cells(c, h)?;
    if !(a >= 0.0 && sigma >= 0.0 && a.is_finite() && sigma.is_finite()) {
        return Err(Error::invalid(format!("a={a} and sigma={sigma} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = sigma * h.sqrt();
    let t = |j: usize| (j as f64 - n as f64) * h;
    let drift = |lo: f64, hi: f64| -4.0 * a * (hi * hi * hi - lo * lo * lo);
    let mut x = vec![0.0; 2 * n + 1];
    for j in n + 1..=2 * n {
        let z: f64 = StandardNormal.sample(&mut rng);
        x[j] = x[j - 1] + scale * z + drift(t(j - 1), t(j));
    }
    for j in (0..n).rev() {
        let z: f64 = StandardNormal.sample(&mut rng);
        x[j] = x[j + 1] - scale * z - drift(t(j), t(j + 1));
    }
    Ok(LimitPath { c, h, a, sigma, seed, stream, x })
}

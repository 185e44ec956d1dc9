// SPDX-License-Identifier: MIT OR Apache-2.0

//! Datasets, the augmented design used by the value-constrained fit, and the
//! piecewise-linear concave function type shared by the other modules.
//!
//! All indices are 0-based.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the concavity check on construction.
pub const CONCAVITY_TOL: f64 = 1e-9;

/// Default relative tolerance for knot detection.
pub const KNOT_TOL: f64 = 1e-8;

/// Regression data with strictly increasing abscissas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Design {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!("x has {} entries but y has {}", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::invalid("at least two observations are required"));
        }
        if let Some(i) = x.iter().chain(y.iter()).position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at position {i}")));
        }
        if let Some(i) = x.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "abscissas must be strictly increasing (x[{i}]={}, x[{}]={})",
                x[i],
                i + 1,
                x[i + 1]
            )));
        }
        Ok(Self { x, y })
    }

    /// Builds a design from rows in any order; duplicate abscissas are rejected.
    pub fn from_points(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("duplicate abscissa {}", w[0].0)));
        }
        let (x, y) = points.into_iter().unzip();
        Self::new(x, y)
    }

    /// Reads two columns `x,y`; a header row is optional.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let mut points = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::invalid(format!("row {}: expected 2 columns, found {}", row + 1, rec.len())));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(y)) => points.push((x, y)),
                _ if row == 0 => continue,
                _ => return Err(Error::invalid(format!("row {}: cannot parse {:?} as numbers", row + 1, rec))),
            }
        }
        Self::from_points(points)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same abscissas, responses replaced.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y)
    }

    /// Responses negated; turns convex regression into concave regression.
    pub fn negated(&self) -> Self {
        Self { x: self.x.clone(), y: self.y.iter().map(|v| -v).collect() }
    }
}

/// Design translated by `y0` and, when `x0` is not a design point,
/// augmented with a zero-weight point at `x0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDesign {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Position of `x0` in `z`.
    pub k0: usize,
    /// Positions in `z` that carry observations, in increasing order.
    pub data_index: Vec<usize>,
    pub x0: f64,
    pub y0: f64,
}

impl AugmentedDesign {
    pub fn n0(&self) -> usize {
        self.z.len()
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.data_index.len()
    }

    /// True when `x0` was inserted (n0 = n + 1).
    pub fn is_augmented(&self) -> bool {
        self.z.len() > self.data_index.len()
    }

    /// True when `x0` lies outside the range of the observed abscissas.
    pub fn is_exterior(&self) -> bool {
        let first = self.z[self.data_index[0]];
        let last = self.z[*self.data_index.last().expect("non-empty")];
        self.x0 < first || self.x0 > last
    }

    /// Unit weight at observed positions, zero at an inserted `x0`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.z.len()];
        for &i in &self.data_index {
            w[i] = 1.0;
        }
        w
    }
}

/// Translates responses by `y0` and inserts `x0` into the abscissas when needed.
pub fn augment(design: &Design, x0: f64, y0: f64) -> Result<AugmentedDesign> {
    if !x0.is_finite() || !y0.is_finite() {
        return Err(Error::invalid(format!("x0={x0} and y0={y0} must be finite")));
    }
    if design.len() < 2 {
        return Err(Error::invalid("at least two observations are required"));
    }
    let x = design.x();
    let translated = design.y().iter().map(|v| v - y0);
    match x.binary_search_by(|v| v.total_cmp(&x0)) {
        Ok(k0) => Ok(AugmentedDesign {
            z: x.to_vec(),
            w: translated.collect(),
            k0,
            data_index: (0..x.len()).collect(),
            x0,
            y0,
        }),
        Err(k0) => {
            let mut z = Vec::with_capacity(x.len() + 1);
            let mut w = Vec::with_capacity(x.len() + 1);
            let mut data_index = Vec::with_capacity(x.len());
            for (i, (xi, wi)) in x.iter().zip(translated).enumerate() {
                if i == k0 {
                    z.push(x0);
                    w.push(0.0);
                }
                data_index.push(z.len());
                z.push(*xi);
                w.push(wi);
            }
            if k0 == x.len() {
                z.push(x0);
                w.push(0.0);
            }
            Ok(AugmentedDesign { z, w, k0, data_index, x0, y0 })
        }
    }
}

/// A concave function, linear between consecutive knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearConcave {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearConcave {
    /// Validates knots and concavity (relative tolerance [`CONCAVITY_TOL`]).
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(knots, values, CONCAVITY_TOL)
    }

    pub fn with_tolerance(knots: Vec<f64>, values: Vec<f64>, tol: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::invalid("knots and values differ in length"));
        }
        if knots.is_empty() {
            return Err(Error::invalid("at least one knot is required"));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite knot or value"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        if let Some((index, excess)) = concavity_violation(&knots, &values, tol) {
            return Err(Error::NotConcave { index, excess });
        }
        Ok(Self { knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().expect("non-empty"))
    }

    /// Linear interpolation; exact at knots.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        Ok(match self.knots.binary_search_by(|k| k.total_cmp(&t)) {
            Ok(j) => self.values[j],
            Err(j) => {
                let (k0, k1) = (self.knots[j - 1], self.knots[j]);
                let lambda = (t - k0) / (k1 - k0);
                (1.0 - lambda) * self.values[j - 1] + lambda * self.values[j]
            }
        })
    }

    /// Right slope minus left slope at every knot (0 at the endpoints).
    pub fn slope_changes(&self) -> Vec<f64> {
        slope_changes(&self.knots, &self.values)
    }

    /// Knots where the slope changes by more than `tol` (relative to
    /// [`slope_scale`]), plus both endpoints.
    pub fn active_knots(&self, tol: f64) -> Vec<usize> {
        active_knots(&self.knots, &self.values, tol)
    }

    /// Applies `f` to the values without rechecking concavity.
    #[cfg(test)]
    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { knots: self.knots.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub(crate) fn from_parts_unchecked(knots: Vec<f64>, values: Vec<f64>) -> Self {
        Self { knots, values }
    }
}

pub(crate) fn slope_changes(knots: &[f64], values: &[f64]) -> Vec<f64> {
    let m = knots.len();
    let mut out = vec![0.0; m];
    for j in 1..m.saturating_sub(1) {
        let left = (values[j] - values[j - 1]) / (knots[j] - knots[j - 1]);
        let right = (values[j + 1] - values[j]) / (knots[j + 1] - knots[j]);
        out[j] = right - left;
    }
    out
}

/// Scale for slope comparisons: the largest of the absolute segment slopes
/// and `max|v| / range`.
pub fn slope_scale(knots: &[f64], values: &[f64]) -> f64 {
    let m = knots.len();
    if m < 2 {
        return f64::MIN_POSITIVE;
    }
    let range = knots[m - 1] - knots[0];
    let vmax = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let smax = knots
        .windows(2)
        .zip(values.windows(2))
        .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
        .fold(0.0f64, f64::max);
    smax.max(vmax / range).max(f64::MIN_POSITIVE)
}

/// First index whose slope increases by more than `tol * slope_scale`.
pub(crate) fn concavity_violation(knots: &[f64], values: &[f64], tol: f64) -> Option<(usize, f64)> {
    let limit = tol * slope_scale(knots, values);
    slope_changes(knots, values)
        .into_iter()
        .enumerate()
        .find(|&(_, d)| d > limit)
}

pub(crate) fn active_knots(knots: &[f64], values: &[f64], tol: f64) -> Vec<usize> {
    let m = knots.len();
    let limit = tol * slope_scale(knots, values);
    let changes = slope_changes(knots, values);
    let mut out = Vec::new();
    for (j, d) in changes.iter().enumerate() {
        if j == 0 || j + 1 == m || d.abs() > limit {
            out.push(j);
        }
    }
    out
}

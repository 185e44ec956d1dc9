// SPDX-License-Identifier: MIT OR Apache-2.0

//! Brute-force reference projection and random instance generators.
//!
//! The oracle enumerates every candidate knot set among the interior grid
//! points. For each set it parametrizes linear splines by their values at
//! the breakpoints (hat-function basis), imposes the pin by restricting to
//! the null space of the constraint row, solves the weighted least-squares
//! problem by SVD, keeps candidates whose slopes do not increase, and
//! returns the one with the smallest objective.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct OracleFit {
    pub fitted: Vec<f64>,
    pub objective: f64,
    pub knots: Vec<usize>,
}

fn objective(w: &[f64], y: &[f64], r: &[f64]) -> f64 {
    0.5 * w.iter().zip(y).zip(r).map(|((w, y), r)| w * (y - r) * (y - r)).sum::<f64>()
}

/// `m x |breaks|` matrix of hat functions on `z` with peaks at `breaks`.
fn hat_basis(z: &[f64], breaks: &[usize]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(z.len(), breaks.len());
    for (s, pair) in breaks.windows(2).enumerate() {
        let (lo, hi) = (pair[0], pair[1]);
        for j in lo..=hi {
            let lam = (z[j] - z[lo]) / (z[hi] - z[lo]);
            a[(j, s)] = 1.0 - lam;
            a[(j, s + 1)] = lam;
        }
    }
    a
}

/// Columns spanning the vectors orthogonal to `c` (a Householder reflection).
fn null_space(c: &DVector<f64>) -> DMatrix<f64> {
    let p = c.len();
    let norm = c.norm();
    let mut v = c.clone();
    v[0] += if c[0] >= 0.0 { norm } else { -norm };
    let h = DMatrix::identity(p, p) - &v * v.transpose() * (2.0 / v.norm_squared());
    h.columns(1, p - 1).into_owned()
}

/// Minimizer of `½ Σ w_j (y_j - r_j)²` over concave `r` on `z`, with
/// `r[pin] = 0` when `pin` is set.
pub fn brute_force_projection(z: &[f64], w: &[f64], y: &[f64], pin: Option<usize>) -> OracleFit {
    let m = z.len();
    assert!((2..=12).contains(&m), "oracle is exponential in the grid size");
    let interior: Vec<usize> = (1..m - 1).collect();
    let sqrt_w = DVector::from_iterator(m, w.iter().map(|v| v.sqrt()));
    let target = DVector::from_iterator(m, y.iter().zip(w).map(|(y, w)| y * w.sqrt()));
    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut best: Option<OracleFit> = None;
    for mask in 0u32..(1 << interior.len()) {
        let knots: Vec<usize> = interior.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i).collect();
        let mut breaks = vec![0];
        breaks.extend(&knots);
        breaks.push(m - 1);
        let a = hat_basis(z, &breaks);
        let map = match pin {
            None => DMatrix::identity(breaks.len(), breaks.len()),
            Some(k) => null_space(&a.row(k).transpose()),
        };
        let design = a.clone() * &map;
        let weighted = DMatrix::from_fn(m, design.ncols(), |j, c| sqrt_w[j] * design[(j, c)]);
        let theta = weighted.svd(true, true).solve(&target, 1e-13).expect("svd solve");
        let fitted_v = &design * theta;
        let fitted: Vec<f64> = fitted_v.iter().copied().collect();
        let values: Vec<f64> = breaks.iter().map(|&b| fitted[b]).collect();
        let slopes: Vec<f64> = breaks.windows(2).zip(values.windows(2)).map(|(b, v)| (v[1] - v[0]) / (z[b[1]] - z[b[0]])).collect();
        let slope_scale = slopes.iter().fold(scale, |a, s| a.max(s.abs()));
        if slopes.windows(2).any(|s| s[1] > s[0] + 1e-10 * slope_scale) {
            continue;
        }
        let obj = objective(w, y, &fitted);
        if best.as_ref().is_none_or(|b| obj < b.objective - 1e-14 * (1.0 + b.objective.abs())) {
            best = Some(OracleFit { fitted, objective: obj, knots });
        }
    }
    best.expect("the empty knot set is always feasible")
}

/// A random projection instance.
pub struct Instance {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub pin: Option<usize>,
}

/// Sorted abscissas: uniform on `[0, 1]`, or clustered around a few centres.
pub fn abscissas(rng: &mut impl Rng, m: usize, clustered: bool) -> Vec<f64> {
    let mut z: Vec<f64> = if clustered {
        let centres: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        (0..m)
            .map(|_| centres[rng.random_range(0..centres.len())] + 1e-3 * rng.random::<f64>())
            .collect()
    } else {
        (0..m).map(|_| rng.random::<f64>()).collect()
    };
    z.sort_by(f64::total_cmp);
    z.dedup();
    while z.len() < m {
        z.push(z.last().unwrap() + 0.01 + rng.random::<f64>());
    }
    z
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Grid of size `2..=max_m`, integer weights, Gaussian targets, and a pin
/// on a quarter of instances (half of those at a zero-weight point).
pub fn random_instance(seed: u64, max_m: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=max_m);
    let clustered = rng.random_bool(0.5);
    let z = abscissas(&mut rng, m, clustered);
    let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(1..=3) as f64).collect();
    let y: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
    let pin = rng.random_bool(0.25).then(|| rng.random_range(0..m));
    // An inserted point carries no weight.
    if let Some(k) = pin {
        if m >= 3 && rng.random_bool(0.5) {
            w[k] = 0.0;
        }
    }
    Instance { z, w, y, pin }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weighted least-squares projection onto the cone of concave vectors, with
//! an optional constraint pinning one coordinate to zero.
//!
//! The solver is a primal active-set method on the knot set (support
//! reduction). For a fixed knot set the fit is a linear spline whose knot
//! values solve a symmetric tridiagonal system; a value pin that is not a
//! knot is added as one bordered equality. Knots are added where the
//! directional derivative along a hinge generator is most negative and
//! removed whenever a re-solve breaks concavity.

use serde::{Deserialize, Serialize};

use crate::data_model::slope_scale;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, solve_tridiagonal};

/// Default relative tolerance for [`fenchel_check`].
pub const FENCHEL_TOL: f64 = 1e-8;

/// `min ½ Σ weights[j] (targets[j] - r[j])²` over concave `r` on `grid`,
/// optionally with `r[pin] = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeProblem {
    grid: Vec<f64>,
    weights: Vec<f64>,
    targets: Vec<f64>,
    constraint: Option<usize>,
}

impl ConeProblem {
    pub fn new(grid: Vec<f64>, weights: Vec<f64>, targets: Vec<f64>, constraint: Option<usize>) -> Result<Self> {
        let m = grid.len();
        if m < 2 {
            return Err(Error::invalid("the grid needs at least two points"));
        }
        if weights.len() != m || targets.len() != m {
            return Err(Error::invalid(format!(
                "grid, weights and targets lengths differ ({m}, {}, {})",
                weights.len(),
                targets.len()
            )));
        }
        if grid.iter().chain(&weights).chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite grid, weight or target"));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
            return Err(Error::invalid("at least two weights must be strictly positive"));
        }
        if let Some(k) = constraint {
            if k >= m {
                return Err(Error::invalid(format!("constraint index {k} out of range for {m} points")));
            }
        }
        Ok(Self { grid, weights, targets, constraint })
    }

    /// Unit weights, no constraint.
    pub fn unweighted(grid: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        let m = grid.len();
        Self::new(grid, vec![1.0; m], targets, None)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn constraint(&self) -> Option<usize> {
        self.constraint
    }

    pub fn objective(&self, r: &[f64]) -> f64 {
        0.5 * compensated_sum(
            self.weights.iter().zip(&self.targets).zip(r).map(|((w, t), v)| w * (t - v) * (t - v)),
        )
    }

    /// `∇φ(r)_j = weights[j] (r[j] - targets[j])`.
    pub fn gradient(&self, r: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.targets).zip(r).map(|((w, t), v)| w * (v - t)).collect()
    }

    /// Magnitude used to make inner-product tolerances relative.
    fn inner_product_scale(&self, fitted: &[f64]) -> f64 {
        let range = self.grid[self.grid.len() - 1] - self.grid[0];
        let mass = compensated_sum(
            self.weights.iter().zip(&self.targets).zip(fitted).map(|((w, t), f)| w * (t.abs() + f.abs())),
        );
        (range * mass).max(f64::MIN_POSITIVE)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSolution {
    pub fitted: Vec<f64>,
    pub objective: f64,
    /// Coefficients of `fitted` in the generator set of [`generators`], same order.
    pub multipliers: Vec<f64>,
    /// Number of linear solves performed.
    pub iterations: usize,
    /// Interior grid indices where the fit bends.
    pub knots: Vec<usize>,
    /// Some knot has a bend below the degeneracy threshold.
    pub near_degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// `±1`.
    Constant { positive: bool },
    /// `±x` (unconstrained) or `±(x - x0)` (constrained).
    Linear { positive: bool },
    /// `(grid[index] - x)_-`, bending down at `grid[index]`, zero to its left.
    RightHinge { index: usize },
    /// `(x - grid[index])_-`, bending down at `grid[index]`, zero to its right.
    LeftHinge { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub values: Vec<f64>,
}

fn generator_kinds(m: usize, constraint: Option<usize>) -> Vec<GeneratorKind> {
    let mut kinds = Vec::with_capacity(m + 2);
    match constraint {
        None => {
            kinds.push(GeneratorKind::Constant { positive: true });
            kinds.push(GeneratorKind::Constant { positive: false });
            kinds.push(GeneratorKind::Linear { positive: true });
            kinds.push(GeneratorKind::Linear { positive: false });
            kinds.extend((1..m - 1).map(|index| GeneratorKind::RightHinge { index }));
        }
        Some(k0) => {
            kinds.push(GeneratorKind::Linear { positive: true });
            kinds.push(GeneratorKind::Linear { positive: false });
            kinds.extend((1..=k0).map(|index| GeneratorKind::LeftHinge { index }));
            kinds.extend((k0 + 1..m - 1).map(|index| GeneratorKind::RightHinge { index }));
        }
    }
    kinds
}

fn generator_values(grid: &[f64], constraint: Option<usize>, kind: GeneratorKind) -> Vec<f64> {
    let origin = constraint.map_or(0.0, |k| grid[k]);
    grid.iter()
        .map(|&x| match kind {
            GeneratorKind::Constant { positive } => sign(positive),
            GeneratorKind::Linear { positive } => sign(positive) * (x - origin),
            GeneratorKind::RightHinge { index } => (grid[index] - x).min(0.0),
            GeneratorKind::LeftHinge { index } => (x - grid[index]).min(0.0),
        })
        .collect()
}

fn sign(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        -1.0
    }
}

/// Generating set of the (optionally value-pinned) cone of concave vectors on `grid`.
///
/// Unconstrained: `±1`, `±x` and `(grid[i] - x)_-` for interior `i`.
/// With `constraint = Some(k0)`: `±(x - grid[k0])`, `(x - grid[i])_-` for
/// `1 <= i <= k0` and `(grid[i] - x)_-` for `k0 < i < m - 1`. Every
/// constrained generator vanishes at `k0`.
pub fn generators(grid: &[f64], constraint: Option<usize>) -> Result<Vec<Generator>> {
    if grid.len() < 2 {
        return Err(Error::invalid("the grid needs at least two points"));
    }
    if let Some(k) = constraint {
        if k >= grid.len() {
            return Err(Error::invalid("constraint index out of range"));
        }
    }
    Ok(generator_kinds(grid.len(), constraint)
        .into_iter()
        .map(|kind| Generator { kind, values: generator_values(grid, constraint, kind) })
        .collect())
}

/// Nonnegative coefficients expressing `fitted` in the generators of `grid`.
pub fn generator_coefficients(grid: &[f64], constraint: Option<usize>, fitted: &[f64]) -> Vec<f64> {
    let m = grid.len();
    let changes = crate::data_model::slope_changes(grid, fitted);
    let slope = |j: usize| (fitted[j + 1] - fitted[j]) / (grid[j + 1] - grid[j]);
    generator_kinds(m, constraint)
        .into_iter()
        .map(|kind| match kind {
            GeneratorKind::Constant { positive } => {
                let intercept = fitted[0] - slope(0) * grid[0];
                (sign(positive) * intercept).max(0.0)
            }
            GeneratorKind::Linear { positive } => {
                let seg = match constraint {
                    Some(k0) if k0 + 1 < m => k0,
                    Some(k0) => k0 - 1,
                    None => 0,
                };
                (sign(positive) * slope(seg)).max(0.0)
            }
            GeneratorKind::RightHinge { index } | GeneratorKind::LeftHinge { index } => {
                if index + 1 < m {
                    (-changes[index]).max(0.0)
                } else {
                    0.0
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FenchelReport {
    pub kinds: Vec<GeneratorKind>,
    /// `⟨a_i, ∇φ(r)⟩` for each generator.
    pub inner_products: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Absolute threshold actually applied to inner products.
    pub threshold: f64,
    /// Generators with a negative inner product.
    pub inequality_failures: Vec<usize>,
    /// Generators with a positive multiplier and a nonzero inner product.
    pub equality_failures: Vec<usize>,
    pub pass: bool,
}

/// Verifies the cone optimality conditions: every generator has
/// `⟨a_i, ∇φ⟩ >= -tol`, and `|⟨a_i, ∇φ⟩| <= tol` where its multiplier is
/// positive. `tol` is relative to `range · Σ w (|t| + |r|)`.
pub fn fenchel_check(problem: &ConeProblem, fitted: &[f64], tol: f64) -> Result<FenchelReport> {
    let m = problem.grid.len();
    if fitted.len() != m {
        return Err(Error::invalid(format!("fit has {} entries, problem has {m}", fitted.len())));
    }
    let grad = problem.gradient(fitted);
    let threshold = tol * problem.inner_product_scale(fitted);
    let kinds = generator_kinds(m, problem.constraint);
    let multipliers = generator_coefficients(&problem.grid, problem.constraint, fitted);
    let range = problem.grid[m - 1] - problem.grid[0];
    let slope_tol = tol * slope_scale(&problem.grid, fitted);
    let mut inner_products = Vec::with_capacity(kinds.len());
    let mut inequality_failures = Vec::new();
    let mut equality_failures = Vec::new();
    for (i, &kind) in kinds.iter().enumerate() {
        let values = generator_values(&problem.grid, problem.constraint, kind);
        let ip = compensated_sum(values.iter().zip(&grad).map(|(a, g)| a * g));
        let alpha_tol = match kind {
            GeneratorKind::Constant { .. } => slope_tol * range,
            _ => slope_tol,
        };
        if ip < -threshold {
            inequality_failures.push(i);
        }
        if multipliers[i] > alpha_tol && ip.abs() > threshold {
            equality_failures.push(i);
        }
        inner_products.push(ip);
    }
    let pass = inequality_failures.is_empty() && equality_failures.is_empty();
    Ok(FenchelReport { kinds, inner_products, multipliers, threshold, inequality_failures, equality_failures, pass })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Maximum number of linear solves; `None` means `50 · m`.
    pub max_solves: Option<usize>,
    /// Relative stopping tolerance on hinge directional derivatives.
    pub stop_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_solves: None, stop_tol: 1e-14 }
    }
}

/// Projects with default options.
pub fn project(problem: &ConeProblem) -> Result<ConeSolution> {
    project_with(problem, SolverOptions::default())
}

pub fn project_with(problem: &ConeProblem, options: SolverOptions) -> Result<ConeSolution> {
    let m = problem.grid.len();
    // Zero-weight coordinates other than the pin never need a knot: drop
    // them, solve, and fill them back in by linear inter/extrapolation.
    let keep: Vec<usize> =
        (0..m).filter(|&j| problem.weights[j] > 0.0 || problem.constraint == Some(j)).collect();
    let pin = problem.constraint.map(|k| keep.binary_search(&k).expect("pin is kept"));
    let sub = Compressed {
        z: keep.iter().map(|&j| problem.grid[j]).collect(),
        w: keep.iter().map(|&j| problem.weights[j]).collect(),
        t: keep.iter().map(|&j| problem.targets[j]).collect(),
        pin,
    };
    let max_solves = options.max_solves.unwrap_or(50 * m);
    let mut solver = ActiveSet::new(&sub, max_solves);
    let stop = options.stop_tol * problem.inner_product_scale(&vec![0.0; m]);
    solver.run(stop)?;

    let mut compact = solver.current.clone();
    if let Some(p) = pin {
        compact[p] = 0.0;
    }
    let fitted = expand(&problem.grid, &keep, &sub.z, &compact);
    let breaks = &solver.breaks;
    let changes = slope_changes_at(&sub.z, &compact, breaks);
    let degenerate_tol = 1e-10 * slope_scale(&sub.z, &compact);
    let mut knots = Vec::new();
    let mut near_degenerate = false;
    for (pos, &b) in breaks.iter().enumerate().skip(1).take(breaks.len().saturating_sub(2)) {
        if changes[pos] < 0.0 {
            knots.push(keep[b]);
        }
        if changes[pos].abs() <= degenerate_tol {
            near_degenerate = true;
        }
    }
    Ok(ConeSolution {
        objective: problem.objective(&fitted),
        multipliers: generator_coefficients(&problem.grid, problem.constraint, &fitted),
        fitted,
        iterations: solver.solves,
        knots,
        near_degenerate,
    })
}

struct Compressed {
    z: Vec<f64>,
    w: Vec<f64>,
    t: Vec<f64>,
    pin: Option<usize>,
}

struct ActiveSet<'a> {
    p: &'a Compressed,
    /// Sorted breakpoint positions (always containing both endpoints).
    breaks: Vec<usize>,
    current: Vec<f64>,
    solves: usize,
    max_solves: usize,
    // scratch
    diag: Vec<f64>,
    off: Vec<f64>,
    rhs: Vec<f64>,
    border: Vec<f64>,
    tri: Vec<f64>,
}

impl<'a> ActiveSet<'a> {
    fn new(p: &'a Compressed, max_solves: usize) -> Self {
        let last = p.z.len() - 1;
        Self {
            p,
            breaks: vec![0, last],
            current: vec![0.0; p.z.len()],
            solves: 0,
            max_solves,
            diag: Vec::new(),
            off: Vec::new(),
            rhs: Vec::new(),
            border: Vec::new(),
            tri: Vec::new(),
        }
    }

    fn run(&mut self, stop: f64) -> Result<()> {
        self.current = self.solve()?;
        let n = self.p.z.len();
        let mut ip = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let slope_eps = 1e-14;
        loop {
            for (j, g) in grad.iter_mut().enumerate() {
                *g = self.p.w[j] * (self.current[j] - self.p.t[j]);
            }
            hinge_inner_products(&self.p.z, &grad, self.p.pin, &mut ip);
            let mut best: Option<(usize, f64)> = None;
            let mut cursor = 0;
            for (i, &v) in ip.iter().enumerate().take(n - 1).skip(1) {
                while self.breaks[cursor] < i {
                    cursor += 1;
                }
                if self.breaks[cursor] == i {
                    continue;
                }
                if v < -stop && best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
            let Some((candidate, _)) = best else {
                return Ok(());
            };
            let at = self.breaks.binary_search(&candidate).unwrap_err();
            self.breaks.insert(at, candidate);

            // Support reduction: move toward the new spline, dropping knots
            // that would bend the wrong way.
            loop {
                let next = self.solve()?;
                let scale = slope_scale(&self.p.z, &next);
                let next_changes = slope_changes_at(&self.p.z, &next, &self.breaks);
                let bad: Vec<usize> = (1..self.breaks.len() - 1)
                    .filter(|&pos| next_changes[pos] > slope_eps * scale)
                    .collect();
                if bad.is_empty() {
                    self.current = next;
                    break;
                }
                let cur_changes = slope_changes_at(&self.p.z, &self.current, &self.breaks);
                let mut step = f64::INFINITY;
                let mut drop = Vec::new();
                for &pos in &bad {
                    let c = cur_changes[pos].min(0.0);
                    let t = c / (c - next_changes[pos]);
                    if t < step - 1e-15 {
                        step = t;
                        drop.clear();
                        drop.push(pos);
                    } else if (t - step).abs() <= 1e-15 {
                        drop.push(pos);
                    }
                }
                let step = step.clamp(0.0, 1.0);
                for (c, nx) in self.current.iter_mut().zip(&next) {
                    *c += step * (nx - *c);
                }
                for pos in drop.into_iter().rev() {
                    self.breaks.remove(pos);
                }
                // The current iterate is linear between the surviving breaks.
                self.reinterpolate_current();
            }
        }
    }

    fn reinterpolate_current(&mut self) {
        let values: Vec<f64> = self.breaks.iter().map(|&b| self.current[b]).collect();
        self.current = interpolate(&self.p.z, &self.breaks, &values);
    }

    /// Weighted least-squares linear spline with breakpoints `self.breaks`.
    fn solve(&mut self) -> Result<Vec<f64>> {
        self.solves += 1;
        if self.solves > self.max_solves {
            return Err(Error::numerical(format!(
                "active-set iteration cap ({}) exceeded with {} breakpoints",
                self.max_solves,
                self.breaks.len()
            )));
        }
        let p = self.p;
        let nb = self.breaks.len();
        self.diag.clear();
        self.diag.resize(nb, 0.0);
        self.off.clear();
        self.off.resize(nb - 1, 0.0);
        self.rhs.clear();
        self.rhs.resize(nb, 0.0);
        let mut pin_segment = None;
        for s in 0..nb - 1 {
            let (a, b) = (self.breaks[s], self.breaks[s + 1]);
            let (za, width) = (p.z[a], p.z[b] - p.z[a]);
            let end = if s + 2 == nb { b + 1 } else { b };
            for j in a..end {
                let lam = (p.z[j] - za) / width;
                if p.pin == Some(j) && j != a && j != b {
                    pin_segment = Some((s, lam));
                }
                let (w, t) = (p.w[j], p.t[j]);
                if w == 0.0 {
                    continue;
                }
                let mu = 1.0 - lam;
                self.diag[s] += w * mu * mu;
                self.off[s] += w * lam * mu;
                self.diag[s + 1] += w * lam * lam;
                self.rhs[s] += w * mu * t;
                self.rhs[s + 1] += w * lam * t;
            }
        }
        if let Some(pin) = p.pin {
            if let Ok(q) = self.breaks.binary_search(&pin) {
                self.diag[q] = 1.0;
                self.rhs[q] = 0.0;
                if q > 0 {
                    self.off[q - 1] = 0.0;
                }
                if q + 1 < nb {
                    self.off[q] = 0.0;
                }
            }
        }
        if !solve_tridiagonal(&self.diag, &self.off, &mut self.rhs, &mut self.tri) {
            return Err(Error::numerical("singular spline normal equations"));
        }
        if let Some((s, lam)) = pin_segment {
            // Bordered system: enforce (1-λ) v_s + λ v_{s+1} = 0.
            self.border.clear();
            self.border.resize(nb, 0.0);
            self.border[s] = 1.0 - lam;
            self.border[s + 1] = lam;
            let mut w = self.border.clone();
            if !solve_tridiagonal(&self.diag, &self.off, &mut w, &mut self.tri) {
                return Err(Error::numerical("singular spline normal equations"));
            }
            let cu = (1.0 - lam) * self.rhs[s] + lam * self.rhs[s + 1];
            let cw = (1.0 - lam) * w[s] + lam * w[s + 1];
            if !(cw > 0.0) {
                return Err(Error::numerical("degenerate value constraint"));
            }
            let mult = cu / cw;
            for (v, wi) in self.rhs.iter_mut().zip(&w) {
                *v -= mult * wi;
            }
        }
        Ok(interpolate(&p.z, &self.breaks, &self.rhs))
    }
}

/// Hinge directional derivatives for every position. Right hinges
/// `Σ_{j>i} (z_i - z_j) g_j` are used right of the pin (everywhere when
/// unconstrained), left hinges `Σ_{j<i} (z_j - z_i) g_j` at and left of it.
fn hinge_inner_products(z: &[f64], g: &[f64], pin: Option<usize>, out: &mut [f64]) {
    let n = z.len();
    let first_right = pin.map_or(0, |k| k + 1);
    // Right hinges by backward recursion: ip(i) = ip(i+1) + (z_i - z_{i+1}) Σ_{j>i} g_j.
    let mut ip = 0.0;
    let mut tail = 0.0;
    out[n - 1] = 0.0;
    for i in (first_right..n - 1).rev() {
        tail += g[i + 1];
        ip += (z[i] - z[i + 1]) * tail;
        out[i] = ip;
    }
    if let Some(k) = pin {
        let mut ip = 0.0;
        let mut head = 0.0;
        out[0] = 0.0;
        for i in 1..=k.min(n - 1) {
            head += g[i - 1];
            ip += (z[i - 1] - z[i]) * head;
            out[i] = ip;
        }
    }
}

/// Slope changes at each breakpoint position (0 at both ends).
fn slope_changes_at(z: &[f64], values: &[f64], breaks: &[usize]) -> Vec<f64> {
    let nb = breaks.len();
    let mut out = vec![0.0; nb];
    for pos in 1..nb.saturating_sub(1) {
        let (a, b, c) = (breaks[pos - 1], breaks[pos], breaks[pos + 1]);
        let left = (values[b] - values[a]) / (z[b] - z[a]);
        let right = (values[c] - values[b]) / (z[c] - z[b]);
        out[pos] = right - left;
    }
    out
}

/// Linear interpolation of breakpoint values onto every position.
fn interpolate(z: &[f64], breaks: &[usize], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for s in 0..breaks.len() - 1 {
        let (a, b) = (breaks[s], breaks[s + 1]);
        let (va, vb) = (values[s], values[s + 1]);
        out[a] = va;
        let width = z[b] - z[a];
        for j in a + 1..b {
            let lam = (z[j] - z[a]) / width;
            out[j] = (1.0 - lam) * va + lam * vb;
        }
        out[b] = vb;
    }
    out
}

/// Fills dropped grid positions by linear interpolation between kept
/// neighbours, extrapolating the end segments.
fn expand(grid: &[f64], keep: &[usize], kept_z: &[f64], kept_values: &[f64]) -> Vec<f64> {
    if keep.len() == grid.len() {
        return kept_values.to_vec();
    }
    let k = keep.len();
    let mut out = vec![0.0; grid.len()];
    let mut seg = 0;
    for (j, &x) in grid.iter().enumerate() {
        while seg + 2 < k && keep[seg + 1] <= j {
            seg += 1;
        }
        if let Ok(pos) = keep.binary_search(&j) {
            out[j] = kept_values[pos];
            continue;
        }
        let (a, b) = (seg, seg + 1);
        let lam = (x - kept_z[a]) / (kept_z[b] - kept_z[a]);
        out[j] = (1.0 - lam) * kept_values[a] + lam * kept_values[b];
    }
    out
}

// SPDX-License-Identifier: MIT OR Apache-2.0

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Running compensated prefix sums: `out[k] = sum(values[..=k])`.
pub(crate) fn prefix_sums(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = CompensatedSum::default();
    values
        .into_iter()
        .map(|v| {
            acc.add(v);
            acc.value()
        })
        .collect()
}

/// Solves a symmetric tridiagonal system in place (Thomas algorithm).
///
/// `diag` has length p, `off` has length p-1 (`off[i]` couples i and i+1),
/// `rhs` is overwritten with the solution. Returns `false` on a
/// non-positive pivot.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) -> bool {
    let p = diag.len();
    debug_assert_eq!(rhs.len(), p);
    if p == 0 {
        return true;
    }
    scratch.clear();
    scratch.resize(p, 0.0);
    let mut pivot = diag[0];
    if !(pivot > 0.0) {
        return false;
    }
    rhs[0] /= pivot;
    for i in 1..p {
        scratch[i] = off[i - 1] / pivot;
        pivot = diag[i] - off[i - 1] * scratch[i];
        if !(pivot > 0.0) {
            return false;
        }
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / pivot;
    }
    for i in (0..p - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    true
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Simulation studies: null rejection rates of the test and the empirical
//! distribution of the statistic across regression functions.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data_model::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::limit_sim::CriticalTable;
use crate::lrt::LrContext;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionFunction {
    /// `-x²` on `[-1, 1]`, tested at `x0 = 0`.
    NegQuadratic,
    /// `cos x` on `[-1, 1]`, tested at `x0 = -0.5`.
    Cosine,
    /// `-eˣ` on `[1, 3]`, tested at `x0 = 2`.
    NegExp,
}

impl RegressionFunction {
    pub const ALL: [RegressionFunction; 3] =
        [RegressionFunction::NegQuadratic, RegressionFunction::Cosine, RegressionFunction::NegExp];

    pub fn name(self) -> &'static str {
        match self {
            RegressionFunction::NegQuadratic => "neg_quadratic",
            RegressionFunction::Cosine => "cosine",
            RegressionFunction::NegExp => "neg_exp",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            RegressionFunction::NegQuadratic => -x * x,
            RegressionFunction::Cosine => x.cos(),
            RegressionFunction::NegExp => -x.exp(),
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        match self {
            RegressionFunction::NegQuadratic => -2.0,
            RegressionFunction::Cosine => -x.cos(),
            RegressionFunction::NegExp => -x.exp(),
        }
    }

    pub fn interval(self) -> (f64, f64) {
        match self {
            RegressionFunction::NegQuadratic | RegressionFunction::Cosine => (-1.0, 1.0),
            RegressionFunction::NegExp => (1.0, 3.0),
        }
    }

    pub fn x0(self) -> f64 {
        match self {
            RegressionFunction::NegQuadratic => 0.0,
            RegressionFunction::Cosine => -0.5,
            RegressionFunction::NegExp => 2.0,
        }
    }
}

impl fmt::Display for RegressionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegressionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {s:?} (neg_quadratic, cosine, neg_exp)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Equispaced, both endpoints included.
    Fixed,
    /// Sorted independent uniforms.
    Random,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Fixed => "fixed",
            DesignKind::Random => "random",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(DesignKind::Fixed),
            "random" => Ok(DesignKind::Random),
            _ => Err(Error::invalid(format!("unknown design {s:?} (fixed, random)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub function: RegressionFunction,
    pub n: usize,
    pub design: DesignKind,
    pub sigma: f64,
    /// Monte Carlo replications.
    pub reps: usize,
}

impl Scenario {
    pub fn new(function: RegressionFunction, n: usize, design: DesignKind, reps: usize) -> Self {
        Self { function, n, design, sigma: 1.0, reps }
    }

    pub fn x0(&self) -> f64 {
        self.function.x0()
    }

    /// The null value `r0(x0)`.
    pub fn y0(&self) -> f64 {
        self.function.eval(self.x0())
    }

    pub fn d_constant(&self) -> Result<f64> {
        d_constant(self.function.second_derivative(self.x0()).abs(), self.sigma)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("scenarios need n >= 2"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("scenario sigma must be positive"));
        }
        Ok(())
    }
}

/// `(24 / (σ⁴ |r0''(x0)|))^{1/5}`.
pub fn d_constant(r0_second_deriv_abs: f64, sigma: f64) -> Result<f64> {
    if !(r0_second_deriv_abs > 0.0 && sigma > 0.0) {
        return Err(Error::invalid("|r0''(x0)| and sigma must be positive"));
    }
    Ok((24.0 / (sigma.powi(4) * r0_second_deriv_abs)).powf(0.2))
}

fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dataset of replication `stream`: `r0(x_i) + σ ε_i` on a fixed or random design.
pub fn generate_design(scenario: &Scenario, seed: u64, stream: u64) -> Result<Design> {
    scenario.validate()?;
    let mut rng = replication_rng(seed, stream);
    let (lo, hi) = scenario.function.interval();
    let n = scenario.n;
    let x: Vec<f64> = match scenario.design {
        DesignKind::Fixed => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        DesignKind::Random => {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
            x.sort_by(f64::total_cmp);
            x
        }
    };
    let y = x
        .iter()
        .map(|&xi| {
            let e: f64 = StandardNormal.sample(&mut rng);
            scenario.function.eval(xi) + scenario.sigma * e
        })
        .collect();
    Design::new(x, y)
}

/// Statistic of one null replication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDraw {
    pub two_log_lambda: f64,
    pub sigma2_hat: f64,
}

/// `2 log λ_n(r0(x0))` for replications `0..reps`.
pub fn null_statistics(scenario: &Scenario, seed: u64, exec: Execution) -> Result<Vec<NullDraw>> {
    scenario.validate()?;
    exec.try_map_indexed(scenario.reps, |k| {
        let design = generate_design(scenario, seed, k as u64)?;
        let ctx = LrContext::new(&design, None)?;
        let lr = ctx.statistic(scenario.x0(), scenario.y0())?;
        Ok(NullDraw { two_log_lambda: lr.two_log_lambda, sigma2_hat: ctx.sigma2() })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub scenario: RegressionFunction,
    pub n: usize,
    pub design: DesignKind,
    pub alpha: f64,
    /// Rejection rate with the true σ².
    pub rate: f64,
    pub se: f64,
    /// Rejection rate with the residual-variance plug-in.
    pub rate_plugin: f64,
    pub se_plugin: f64,
    pub reps: usize,
}

fn binomial_se(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

/// Null rejection rates at each `alpha`.
pub fn level_study(
    scenario: &Scenario,
    alphas: &[f64],
    table: &CriticalTable,
    seed: u64,
    exec: Execution,
) -> Result<Vec<LevelEstimate>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::invalid(format!("alpha={a} must lie in (0, 1)")));
    }
    let draws = null_statistics(scenario, seed, exec)?;
    let reps = draws.len().max(1);
    let sigma2 = scenario.sigma * scenario.sigma;
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let q = table.quantile(1.0 - alpha);
            let known = draws.iter().filter(|d| d.two_log_lambda > sigma2 * q).count();
            let plugin = draws.iter().filter(|d| d.two_log_lambda > d.sigma2_hat * q).count();
            let rate = known as f64 / reps as f64;
            let rate_plugin = plugin as f64 / reps as f64;
            LevelEstimate {
                scenario: scenario.function,
                n: scenario.n,
                design: scenario.design,
                alpha,
                rate,
                se: binomial_se(rate, reps),
                rate_plugin,
                se_plugin: binomial_se(rate_plugin, reps),
                reps: draws.len(),
            }
        })
        .collect())
}

pub fn write_level_csv<W: Write>(writer: W, rows: &[LevelEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "n", "design", "alpha", "rate", "se", "rate_plugin", "se_plugin", "reps"])?;
    for r in rows {
        w.write_record([
            r.scenario.name().to_owned(),
            r.n.to_string(),
            r.design.name().to_owned(),
            r.alpha.to_string(),
            r.rate.to_string(),
            r.se.to_string(),
            r.rate_plugin.to_string(),
            r.se_plugin.to_string(),
            r.reps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A sorted sample and its label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfCurve {
    pub label: String,
    pub values: Vec<f64>,
}

impl EcdfCurve {
    pub fn new(label: impl Into<String>, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { label: label.into(), values }
    }

    pub fn ecdf(&self, x: f64) -> f64 {
        self.values.partition_point(|v| *v <= x) as f64 / self.values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfStudy {
    /// One curve per scenario (statistic divided by the true σ²).
    pub scenarios: Vec<EcdfCurve>,
    pub limit: EcdfCurve,
}

impl EcdfStudy {
    /// Largest pairwise sup distance among the scenario and limit curves.
    pub fn max_pairwise_distance(&self) -> f64 {
        let mut all: Vec<&EcdfCurve> = self.scenarios.iter().collect();
        all.push(&self.limit);
        let mut worst = 0.0f64;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                worst = worst.max(sup_distance(&all[i].values, &all[j].values));
            }
        }
        worst
    }

    /// Smallest sup distance between the χ²₁ CDF and any curve.
    pub fn min_chisq_distance(&self) -> f64 {
        self.scenarios
            .iter()
            .chain(std::iter::once(&self.limit))
            .map(|c| sup_distance_to_cdf(&c.values, chisq1_cdf))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn chisq1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ChiSquared::new(1.0).expect("one degree of freedom").cdf(x)
}

/// Two-sample Kolmogorov distance between sorted samples.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// Kolmogorov distance between a sorted sample and a continuous CDF.
pub fn sup_distance_to_cdf(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Null statistics for each scenario, with the limit draws for comparison.
/// Scenario `i` uses seed `seed + i`.
pub fn ecdf_study(scenarios: &[Scenario], table: &CriticalTable, seed: u64, exec: Execution) -> Result<EcdfStudy> {
    let mut curves = Vec::with_capacity(scenarios.len());
    for (i, s) in scenarios.iter().enumerate() {
        let sigma2 = s.sigma * s.sigma;
        let draws = null_statistics(s, seed.wrapping_add(i as u64), exec)?;
        curves.push(EcdfCurve::new(s.function.name(), draws.iter().map(|d| d.two_log_lambda / sigma2).collect()));
    }
    Ok(EcdfStudy { scenarios: curves, limit: EcdfCurve::new("limit", table.draws().to_vec()) })
}

/// Rows `scenario,value,ecdf` for every curve, plus `chisq1` rows on a grid.
pub fn write_ecdf_csv<W: Write>(writer: W, study: &EcdfStudy, chisq_points: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "value", "ecdf"])?;
    let mut top = 0.0f64;
    for curve in study.scenarios.iter().chain(std::iter::once(&study.limit)) {
        let n = curve.values.len() as f64;
        for (k, v) in curve.values.iter().enumerate() {
            w.write_record([curve.label.clone(), v.to_string(), ((k + 1) as f64 / n).to_string()])?;
            top = top.max(*v);
        }
    }
    let points = chisq_points.max(2);
    for k in 0..points {
        let x = top * k as f64 / (points - 1) as f64;
        w.write_record(["chisq1".to_owned(), x.to_string(), chisq1_cdf(x).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the run; see
//! the "Known deviations" section of the README for the measurements.

mod common;

use std::time::Instant;

use common::{abscissas, brute_force_projection, max_abs_diff, normal, random_instance};
use concave_lrt::limit_sim::{
    dee_draw, dee_from_fits, default_invelope_tol, invelope_check, invelope_constrained, invelope_unconstrained,
    limit_draws, rescale_canonical, simulate_path_stream, Rescaling,
};
use concave_lrt::lrt::GridSpec;
use concave_lrt::mc_harness::{
    d_constant, ecdf_study, level_study, write_ecdf_csv, write_level_csv, DesignKind, RegressionFunction, Scenario,
};
use concave_lrt::{
    augment, check_alse, check_nlse, confidence_interval, fit_alse, fit_nlse, lr_statistic, project, ConeProblem,
    CriticalTable, Design, Execution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that are known to miss their thresholds.
const KNOWN_RED: &[u32] = &[6, 7];

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let table = CriticalTable::embedded().expect("embedded table");
    let criteria: Vec<Criterion> = vec![
        (1, "oracle equivalence", Box::new(oracle_equivalence)),
        (2, "characterization certificates", Box::new(certificates)),
        (3, "likelihood-ratio identities", Box::new(lr_identities)),
        (4, "local constants", Box::new(local_constants)),
        (5, "null levels", Box::new(|| null_levels(&table))),
        (6, "universality of the null distribution", Box::new(|| universality(&table))),
        (7, "limit statistic degeneracy and sign", Box::new(limit_sign)),
        (8, "invelope slack rate", Box::new(invelope_rate)),
        (9, "rescaling commutation", Box::new(rescaling)),
        (10, "determinism", Box::new(determinism)),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in &criteria {
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let status = if v.pass { "PASS" } else { "FAIL" };
        let known = if !v.pass && KNOWN_RED.contains(id) { " [known]" } else { "" };
        println!("criterion {id:>2} {status}{known} {name}: {} ({secs:.1} s)", v.detail);
        if !v.pass && !KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn oracle_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let inst = random_instance(10_000 + seed, 7);
        let oracle = brute_force_projection(&inst.z, &inst.w, &inst.y, inst.pin);
        let problem = ConeProblem::new(inst.z, inst.w, inst.y, inst.pin).expect("instance");
        let fitted = project(&problem).expect("projection").fitted;
        worst = worst.max(max_abs_diff(&fitted, &oracle.fitted));
    }
    verdict(worst <= 1e-8, format!("200 instances, max coordinate error {worst:.2e} (limit 1e-8)"))
}

struct LrInstance {
    design: Design,
    x0: f64,
    y0: f64,
}

/// Up to 50 points, noisy concave or pure-noise responses, and `x0` at a
/// design point, between design points, or outside the range.
fn lr_instance(seed: u64) -> LrInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=50);
    let clustered = rng.random_bool(0.3);
    let x = abscissas(&mut rng, n, clustered);
    let curved = rng.random_bool(0.7);
    let y: Vec<f64> = x
        .iter()
        .map(|t| if curved { -4.0 * (t - 0.5) * (t - 0.5) } else { 0.0 } + 0.3 * normal(&mut rng))
        .collect();
    let design = Design::new(x.clone(), y).expect("design");
    let x0 = match rng.random_range(0..3) {
        0 => x[rng.random_range(0..n)],
        1 if n > 1 => {
            let i = rng.random_range(0..n - 1);
            x[i] + rng.random::<f64>() * (x[i + 1] - x[i])
        }
        _ => x[n - 1] + 0.1 + rng.random::<f64>(),
    };
    let y0 = normal(&mut rng);
    LrInstance { design, x0, y0 }
}

fn certificates() -> Verdict {
    let (mut passed, mut worst) = (0, 0.0f64);
    for seed in 0..500 {
        let inst = lr_instance(20_000 + seed);
        let alse = fit_alse(&inst.design).expect("alse");
        let nlse = fit_nlse(&inst.design, inst.x0, inst.y0).expect("nlse");
        let aug = augment(&inst.design, inst.x0, inst.y0).expect("augment");
        let a = check_alse(&inst.design, &alse.fit, 1e-7).expect("check");
        let b = check_nlse(&aug, &nlse.fit, 1e-7).expect("check");
        worst = worst.max(a.worst_ratio()).max(b.worst_ratio());
        passed += usize::from(a.pass && b.pass);
    }
    verdict(passed == 500, format!("{passed}/500 instances certified, worst slack/tolerance {worst:.3}"))
}

fn lr_identities() -> Verdict {
    let (mut min_stat, mut worst_gap) = (f64::INFINITY, 0.0f64);
    let mut exact_zero = true;
    for seed in 0..500 {
        let inst = lr_instance(20_000 + seed);
        let lr = lr_statistic(&inst.design, inst.x0, inst.y0, None).expect("statistic");
        let scale = inst.design.y().iter().map(|v| (v - inst.y0).powi(2)).sum::<f64>().max(1.0);
        min_stat = min_stat.min(lr.two_log_lambda / scale);
        worst_gap = worst_gap.max(lr.identity_gap / scale);

        let i = seed as usize % inst.design.len();
        let x0 = inst.design.x()[i];
        let at = lr.alse.fit.evaluate(x0).expect("inside");
        let zero = lr_statistic(&inst.design, x0, at, None).expect("statistic");
        exact_zero &= zero.two_log_lambda == 0.0;
    }
    let pass = min_stat >= -1e-10 && worst_gap <= 1e-8 && exact_zero;
    verdict(
        pass,
        format!("min 2logλ/scale {min_stat:.2e}, max identity gap/scale {worst_gap:.2e}, exact zero at fit value: {exact_zero}"),
    )
}

fn local_constants() -> Verdict {
    let cases = [(2.0, 1.64), (0.878, 1.94), (7.39, 1.27)];
    let got: Vec<f64> = cases.iter().map(|(r2, _)| d_constant(*r2, 1.0).expect("constant")).collect();
    let pass = cases.iter().zip(&got).all(|((_, want), g)| (g - want).abs() <= 0.005);
    verdict(pass, format!("{:.4} {:.4} {:.4} (targets 1.64 1.94 1.27)", got[0], got[1], got[2]))
}

fn null_levels(table: &CriticalTable) -> Verdict {
    let cells = [
        (RegressionFunction::NegQuadratic, 100, 0.05, 0.0527),
        (RegressionFunction::NegQuadratic, 100, 0.10, 0.108),
        (RegressionFunction::NegExp, 30, 0.05, 0.0495),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (f, n, alpha, target) in cells {
        let s = Scenario::new(f, n, DesignKind::Fixed, 5000);
        let row = &level_study(&s, &[alpha], table, 2024, Execution::Parallel).expect("levels")[0];
        pass &= (row.rate - target).abs() <= 0.015;
        parts.push(format!("{} n={n} α={alpha}: {:.4} vs {target}", f.name(), row.rate));
    }
    verdict(pass, parts.join("; "))
}

fn universality(table: &CriticalTable) -> Verdict {
    let scenarios: Vec<Scenario> =
        RegressionFunction::ALL.iter().map(|f| Scenario::new(*f, 1000, DesignKind::Fixed, 1000)).collect();
    let study = ecdf_study(&scenarios, table, 2024, Execution::Parallel).expect("study");
    let pairwise = study.max_pairwise_distance();
    let chisq = study.min_chisq_distance();
    verdict(
        pairwise <= 0.08 && chisq > 0.1,
        format!("max pairwise sup distance {pairwise:.3} (limit 0.08); min distance to chi-square(1) {chisq:.3} (needs > 0.1)"),
    )
}

fn limit_sign() -> Verdict {
    let mut degenerate = 0.0f64;
    for seed in 0..5 {
        let p = simulate_path_stream(4.0, 0.005, 1.0, 0.0, seed, 0).expect("path");
        degenerate = degenerate.max(dee_draw(&p, 3.0).expect("draw").abs());
    }
    let windowed = limit_draws(1000, 4.0, 0.005, 3.0, 7, Execution::Parallel).expect("draws");
    let negative = windowed.iter().filter(|d| **d < 0.0).count();
    let min = windowed.iter().copied().fold(f64::INFINITY, f64::min);
    let full: Vec<f64> = Execution::Parallel
        .try_map_indexed(1000, |k| -> concave_lrt::Result<f64> {
            let p = simulate_path_stream(4.0, 0.005, 1.0, 1.0, 7, k as u64)?;
            let a = invelope_unconstrained(&p)?;
            let b = invelope_constrained(&p)?;
            Ok(dee_from_fits(&a, &b, p.h, p.c))
        })
        .expect("draws");
    let full_negative = full.iter().filter(|d| **d < -1e-10).count();
    verdict(
        degenerate <= 1e-10 && negative == 0,
        format!(
            "sigma=0 max |D| {degenerate:.1e}; window b=3: {negative}/1000 negative (min {min:.2e}); \
             whole grid: {full_negative}/1000 negative"
        ),
    )
}

fn invelope_rate() -> Verdict {
    let (c, b, fine_h) = (4.0, 3.0, 0.0025);
    let slacks: Vec<(f64, f64, bool)> = Execution::Parallel
        .try_map_indexed(100, |k| -> concave_lrt::Result<(f64, f64, bool)> {
            let fine = simulate_path_stream(c, fine_h, 1.0, 1.0, 8, k as u64)?;
            let coarse = fine.coarsen()?;
            let f = invelope_check(&fine, &invelope_constrained(&fine)?, b, default_invelope_tol(fine.h))?;
            let g = invelope_check(&coarse, &invelope_constrained(&coarse)?, b, default_invelope_tol(coarse.h))?;
            Ok((f.max_slack(), g.max_slack(), f.pass && g.pass))
        })
        .expect("checks");
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let fine = mean(slacks.iter().map(|s| s.0).collect());
    let coarse = mean(slacks.iter().map(|s| s.1).collect());
    let passed = slacks.iter().filter(|s| s.2).count();
    let ratio = coarse / fine;
    verdict(
        (1.3..=3.0).contains(&ratio),
        format!(
            "mean slack h=0.005: {coarse:.2e}, h=0.0025: {fine:.2e}, ratio {ratio:.2} (band [1.3, 3]); \
             {passed}/100 pairs within 0.2h"
        ),
    )
}

fn rescaling() -> Verdict {
    let (c, h) = (2.0, 0.005);
    let mut worst = 0.0f64;
    for (a, sigma) in [(1.0, 2.0), (2.0 / 24.0, 1.0)] {
        let g2 = Rescaling::new(a, sigma).expect("scaling").gamma2;
        for k in 0..5 {
            let canon = simulate_path_stream(c, h, 1.0, 1.0, 9, k).expect("path");
            let scaled = simulate_path_stream(g2 * c, g2 * h, a, sigma, 9, k).expect("path");
            for constrained in [false, true] {
                let fit = |p| if constrained { invelope_constrained(p) } else { invelope_unconstrained(p) };
                let want = fit(&canon).expect("fit");
                let got = rescale_canonical(&fit(&scaled).expect("fit"), a, sigma).expect("rescale");
                worst = worst.max(max_abs_diff(&got.r, &want.r)).max(max_abs_diff(&got.u, &want.u));
            }
        }
    }
    verdict(worst <= 5.0 * h, format!("sup error {worst:.2e} (limit 5h = {:.3})", 5.0 * h))
}

fn outputs(exec: Execution) -> Vec<Vec<u8>> {
    let table = concave_lrt::limit_sim::critical_table(40, 2.0, 0.01, 1.5, 5, exec).expect("table");
    let mut t = Vec::new();
    table.write_csv(&mut t).expect("csv");

    let s = Scenario::new(RegressionFunction::Cosine, 60, DesignKind::Random, 200);
    let rows = level_study(&s, &[0.05, 0.1], &table, 5, exec).expect("levels");
    let mut l = Vec::new();
    write_level_csv(&mut l, &rows).expect("csv");

    let scenarios = [Scenario::new(RegressionFunction::NegExp, 80, DesignKind::Fixed, 100)];
    let study = ecdf_study(&scenarios, &table, 5, exec).expect("study");
    let mut e = Vec::new();
    write_ecdf_csv(&mut e, &study, 20).expect("csv");

    let design = concave_lrt::mc_harness::generate_design(&s, 5, 0).expect("design");
    let ci = confidence_interval(&design, 0.1, 0.05, &table, &GridSpec::default(), None, exec).expect("interval");
    vec![t, l, e, serde_json::to_vec(&ci).expect("json")]
}

fn determinism() -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().expect("pool");
    let first = pool.install(|| outputs(Execution::Parallel));
    let second = pool.install(|| outputs(Execution::Parallel));
    let sequential = outputs(Execution::Sequential);
    let pass = first == second && first == sequential;
    let bytes: usize = first.iter().map(Vec::len).sum();
    verdict(pass, format!("table, level, ecdf and interval outputs ({bytes} bytes): 4 threads twice vs 1 thread identical = {pass}"))
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use concave_lrt::lrt::{localization_of, GridSpec};
use concave_lrt::mc_harness::{generate_design, DesignKind, RegressionFunction, Scenario};
use concave_lrt::{confidence_interval, lr_statistic, lr_test, CriticalTable, Design, Execution, TestDecision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn table() -> CriticalTable {
    CriticalTable::embedded().unwrap()
}

/// `x²` plus N(0, 0.1²) noise on 100 equispaced points of `[-1, 1]`.
fn convex_band_design(seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
    let y = x.iter().map(|t| t * t + noise.sample(&mut rng)).collect();
    Design::new(x, y).unwrap()
}

#[test]
fn convex_band_covers_the_truth() {
    let t = table();
    let points: Vec<f64> = (0..21).map(|k| -0.95 + 0.095 * k as f64).collect();
    let (mut covered, mut total) = (0, 0);
    for seed in 0..4 {
        let negated = convex_band_design(seed).negated();
        for &x0 in &points {
            let ci = confidence_interval(&negated, x0, 0.05, &t, &GridSpec::default(), None, Execution::Parallel)
                .unwrap()
                .negated();
            assert!(ci.lower <= ci.upper);
            covered += usize::from(ci.lower <= x0 * x0 && x0 * x0 <= ci.upper);
            total += 1;
        }
    }
    let rate = covered as f64 / total as f64;
    assert!(rate >= 0.85, "pointwise coverage {rate}");
}

#[test]
fn inversion_matches_the_test() {
    let t = table();
    let design = convex_band_design(9).negated();
    let x0 = 0.3;
    let ci = confidence_interval(&design, x0, 0.1, &t, &GridSpec::default(), None, Execution::Sequential).unwrap();
    assert!(!ci.nonconvex_warning);
    let width = ci.upper - ci.lower;
    for k in -10..=10 {
        let y0 = 0.5 * (ci.lower + ci.upper) + 0.15 * width * k as f64;
        let margin = (y0 - ci.lower).abs().min((y0 - ci.upper).abs());
        if margin < 1e-3 * width {
            continue;
        }
        let (outcome, _) = lr_test(&design, x0, y0, 0.1, &t, None).unwrap();
        let inside = y0 >= ci.lower && y0 <= ci.upper;
        assert_eq!(outcome.decision == TestDecision::FailToReject, inside, "y0={y0}");
    }
}

#[test]
fn intervals_nest_in_alpha() {
    let t = table();
    let design = convex_band_design(3).negated();
    for x0 in [-0.7, 0.0, 0.55] {
        let wide = confidence_interval(&design, x0, 0.05, &t, &GridSpec::default(), None, Execution::Parallel).unwrap();
        let narrow = confidence_interval(&design, x0, 0.2, &t, &GridSpec::default(), None, Execution::Parallel).unwrap();
        assert!(wide.lower <= narrow.lower + 1e-9 && narrow.upper <= wide.upper + 1e-9);
    }
}

#[test]
fn localization_split() {
    let scenario = Scenario::new(RegressionFunction::NegQuadratic, 1000, DesignKind::Fixed, 1);
    let bs = [0.5, 3.9];
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); bs.len()];
    for k in 0..40 {
        let design = generate_design(&scenario, 17, k).unwrap();
        let lr = lr_statistic(&design, scenario.x0(), scenario.y0(), Some(1.0)).unwrap();
        if lr.two_log_lambda <= 1e-12 {
            continue;
        }
        for (j, &b) in bs.iter().enumerate() {
            let split = localization_of(&lr, &design, b).unwrap();
            let scale = lr.two_log_lambda.abs().max(1.0);
            assert!((split.d_nb + split.e_nb - lr.two_log_lambda).abs() <= 1e-8 * scale);
            ratios[j].push((split.e_nb / lr.two_log_lambda).abs());
        }
    }
    let medians: Vec<f64> = ratios
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    // Not monotone in between: the ratio peaks near b = 2.
    assert!(medians[1] < 0.5 * medians[0], "{medians:?}");

    // The whole design inside the window leaves no remainder.
    let design = generate_design(&scenario, 17, 0).unwrap();
    let lr = lr_statistic(&design, scenario.x0(), scenario.y0(), None).unwrap();
    let all = localization_of(&lr, &design, 100.0).unwrap();
    assert_eq!(all.e_nb, 0.0);
    let none = localization_of(&lr, &design, 1e-9).unwrap();
    assert_eq!(none.d_nb, 0.0);
}

// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{brute_force_projection, max_abs_diff, random_instance};
use concave_lrt::{fenchel_check, fit_alse, fit_nlse, project, ConeProblem, Design};
use proptest::prelude::*;

fn solve(z: &[f64], w: &[f64], y: &[f64], pin: Option<usize>) -> Vec<f64> {
    let problem = ConeProblem::new(z.to_vec(), w.to_vec(), y.to_vec(), pin).unwrap();
    project(&problem).unwrap().fitted
}

#[test]
fn oracle_reproduces_hand_examples() {
    // Concave data is its own projection.
    let z = [0.0, 1.0, 2.0, 3.0];
    let y = [0.0, 1.0, 1.5, 1.0];
    let o = brute_force_projection(&z, &[1.0; 4], &y, None);
    assert!(max_abs_diff(&o.fitted, &y) < 1e-12);

    // V-shaped data projects to a constant.
    let o = brute_force_projection(&[0.0, 1.0, 2.0], &[1.0; 3], &[1.0, 0.0, 1.0], None);
    assert!(max_abs_diff(&o.fitted, &[2.0 / 3.0; 3]) < 1e-12);

    // Pinned at the middle of flat data.
    let o = brute_force_projection(&[0.0, 1.0, 2.0], &[1.0; 3], &[1.0, 1.0, 1.0], Some(1));
    assert!(max_abs_diff(&o.fitted, &[1.0, 0.0, 1.0]) > 0.1);
    assert!(o.fitted[1].abs() < 1e-12);
    assert!((o.objective - 1.5).abs() < 1e-12, "{}", o.objective);
}

#[test]
fn solver_matches_oracle_on_fixed_seeds() {
    for seed in 0..300 {
        let inst = random_instance(seed, 8);
        let oracle = brute_force_projection(&inst.z, &inst.w, &inst.y, inst.pin);
        let fitted = solve(&inst.z, &inst.w, &inst.y, inst.pin);
        let err = max_abs_diff(&fitted, &oracle.fitted);
        assert!(err <= 1e-8, "seed {seed}: error {err:e}, pin {:?}", inst.pin);
    }
}

#[test]
fn estimators_match_oracle() {
    for seed in 0..100 {
        let inst = random_instance(1000 + seed, 7);
        let design = Design::new(inst.z.clone(), inst.y.clone()).unwrap();
        let alse = fit_alse(&design).unwrap();
        let oracle = brute_force_projection(&inst.z, &vec![1.0; inst.z.len()], &inst.y, None);
        assert!(max_abs_diff(&alse.fitted_at_data(&design), &oracle.fitted) < 1e-8, "seed {seed}");
        assert!((alse.objective - oracle.objective).abs() < 1e-9);

        // Constrained at an interior point that is not a design point.
        let x0 = 0.5 * (inst.z[0] + inst.z[1]);
        let y0 = 0.3;
        let nlse = fit_nlse(&design, x0, y0).unwrap();
        let mut z = inst.z.clone();
        z.insert(1, x0);
        let mut w = vec![1.0; z.len()];
        w[1] = 0.0;
        let mut t: Vec<f64> = inst.y.iter().map(|v| v - y0).collect();
        t.insert(1, 0.0);
        let oracle = brute_force_projection(&z, &w, &t, Some(1));
        let mut expected: Vec<f64> = oracle.fitted.iter().map(|v| v + y0).collect();
        expected.remove(1);
        assert!(max_abs_diff(&nlse.fitted_at_data(&design), &expected) < 1e-8, "seed {seed}");
        assert!((nlse.fit.evaluate(x0).unwrap() - y0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_agrees_with_oracle(seed in any::<u64>()) {
        let inst = random_instance(seed, 7);
        let oracle = brute_force_projection(&inst.z, &inst.w, &inst.y, inst.pin);
        let fitted = solve(&inst.z, &inst.w, &inst.y, inst.pin);
        prop_assert!(max_abs_diff(&fitted, &oracle.fitted) <= 1e-8);
    }

    #[test]
    fn oracle_fit_passes_fenchel(seed in any::<u64>()) {
        let inst = random_instance(seed, 7);
        let oracle = brute_force_projection(&inst.z, &inst.w, &inst.y, inst.pin);
        let problem = ConeProblem::new(inst.z.clone(), inst.w.clone(), inst.y.clone(), inst.pin).unwrap();
        let report = fenchel_check(&problem, &oracle.fitted, 1e-7).unwrap();
        prop_assert!(report.pass, "{report:?}");
    }
}

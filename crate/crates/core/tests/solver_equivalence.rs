//! Cross-checks of the constrained-lasso production path against two
//! independent solvers: FISTA on the expanded ratio matrix, and the
//! variable-splitting QP at tiny sizes.

mod common;

use lrlasso::data::{expand_ratios, Dataset, Family, LogDesign};
use lrlasso::logratio;
use lrlasso::solver;
use ndarray::Array1;

fn centered_design(n: usize, p: usize, seed: u64) -> (LogDesign, Array1<f64>) {
    let x = common::positive_matrix(n, p, seed);
    let y = common::gaussian_vector(n, seed ^ 0xABCD);
    let d = Dataset::new(
        x,
        y.clone(),
        (0..p).map(|j| format!("f{j}")).collect(),
        None,
        Family::Gaussian,
    )
    .unwrap();
    (lrlasso::data::log_design(&d, true, false).unwrap(), y)
}

#[test]
fn constrained_matches_expanded_prox_at_double_penalty() {
    // random instances across sizes; the expanded problem at lambda = 2 gamma
    // must reach the same objective and the same fitted values
    for (inst, &(n, p)) in [(20usize, 4usize), (20, 6), (50, 6), (50, 8)].iter().enumerate() {
        let (w, y) = centered_design(n, p, 100 + inst as u64);
        let ybar = y.sum() / n as f64;
        let yc = y.mapv(|v| v - ybar);
        let gmax = solver::gamma_max(&w.w, &y, Family::Gaussian);
        let (z, _) = expand_ratios(&w, None).unwrap();
        for frac in [0.5, 0.2, 0.08] {
            let gamma = frac * gmax;
            let sol = solver::constrained_lasso(&w, &y, gamma, Family::Gaussian, None).unwrap();
            let (theta, obj_z) = common::prox_lasso(&z, &yc, 2.0 * gamma);
            assert!(
                (sol.objective - obj_z).abs() <= 1e-5 * (1.0 + obj_z.abs()),
                "objective mismatch at n={n} p={p} gamma={gamma}: {} vs {}",
                sol.objective,
                obj_z
            );
            // fitted values agree (the b-image of any expanded solution)
            let fit_c = w.w.dot(&sol.coefficients);
            let fit_z = z.dot(&theta);
            let max_diff = fit_c
                .iter()
                .zip(fit_z.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            assert!(
                max_diff <= 1e-4,
                "fitted values diverge at n={n} p={p} gamma={gamma}: {max_diff}"
            );
        }
    }
}

#[test]
fn constrained_matches_variable_splitting_qp_at_tiny_sizes() {
    for seed in 0..4u64 {
        let (w, y) = centered_design(12, 4, 400 + seed);
        let ybar = y.sum() / 12.0;
        let yc = y.mapv(|v| v - ybar);
        let gamma = 0.25 * solver::gamma_max(&w.w, &y, Family::Gaussian);
        let sol = solver::constrained_lasso(&w, &y, gamma, Family::Gaussian, None).unwrap();
        let (beta_qp, obj_qp) = common::qp_splitting_constrained(&w.w, &yc, gamma);
        assert!(
            (sol.objective - obj_qp).abs() <= 1e-5 * (1.0 + obj_qp.abs()),
            "objective mismatch vs QP: {} vs {} (seed {seed})",
            sol.objective,
            obj_qp
        );
        for j in 0..4 {
            assert!(
                (sol.coefficients[j] - beta_qp[j]).abs() <= 1e-4,
                "coefficient {j} mismatch: {} vs {}",
                sol.coefficients[j],
                beta_qp[j]
            );
        }
    }
}

#[test]
fn single_stage_objective_equals_expanded_objective() {
    let (w, y) = centered_design(30, 6, 777);
    let gmax = solver::gamma_max(&w.w, &y, Family::Gaussian);
    let lambda = 0.5 * gmax; // expanded penalty, gamma = lambda / 2
    let (theta, _contrast, report) =
        logratio::fit_single_stage(&w, &y, lambda, Family::Gaussian, false).unwrap();
    let ybar = y.sum() / 30.0;
    let yc = y.mapv(|v| v - ybar);
    let (z, pairs) = expand_ratios(&w, None).unwrap();
    let (_, obj_z) = common::prox_lasso(&z, &yc, lambda);
    assert!(
        (report.objective - obj_z).abs() <= 1e-5 * (1.0 + obj_z.abs()),
        "single-stage objective {} vs expanded {}",
        report.objective,
        obj_z
    );
    // the canonical theta achieves the same objective in ratio space
    let mut fit_theta = Array1::from_elem(30, 0.0);
    for (&(a, b), &t) in theta.iter() {
        let col = pairs.iter().position(|&q| q == (a, b)).unwrap();
        for i in 0..30 {
            fit_theta[i] += t * z[[i, col]];
        }
    }
    let rss: f64 = yc
        .iter()
        .zip(fit_theta.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let obj_theta = 0.5 * rss + lambda * theta.l1_norm();
    assert!(
        (obj_theta - obj_z).abs() <= 1e-5 * (1.0 + obj_z.abs()),
        "canonical theta objective {obj_theta} vs expanded {obj_z}"
    );
}

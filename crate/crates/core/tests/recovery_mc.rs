//! Monte-Carlo behavior of the cross-validated estimators on planted
//! two-ratio data.

mod common;

use lrlasso::cv::{self, CvRule, PathSpec};
use lrlasso::data::{log_design, Family};
use lrlasso::logratio;
use lrlasso::simulate;
use lrlasso::solver;
use rayon::prelude::*;

#[test]
fn cv_single_stage_recovers_planted_support_at_s2() {
    // at s = 2 the CV-chosen constrained lasso keeps all four signal features
    let hits: usize = (0..100u64)
        .into_par_iter()
        .map(|rep| {
            let (d, _) = simulate::gen_experiment1(100, 30, 2.0, 40_000 + rep).unwrap();
            let w_raw = log_design(&d, false, false).unwrap();
            let folds = cv::make_folds(&d, 10, rep).unwrap();
            let spec = PathSpec {
                n_lambda: 25,
                lambda_min_ratio: 1e-3,
                rule: CvRule::Min,
            };
            let curve =
                cv::cv_constrained_lasso(&w_raw, &d.y, &folds, &spec, Family::Gaussian).unwrap();
            let gamma = curve.chosen_point().penalty;
            let w = log_design(&d, true, false).unwrap();
            let (_, contrast, _) =
                logratio::fit_single_stage(&w, &d.y, 2.0 * gamma, Family::Gaussian, false)
                    .unwrap();
            let support = contrast.support();
            [0usize, 1, 2, 3]
                .iter()
                .all(|j| support.contains(j)) as usize
        })
        .sum();
    assert!(
        hits >= 90,
        "planted support recovered in only {hits}/100 runs"
    );
}

#[test]
fn cv_two_stage_prefers_two_or_three_steps() {
    // the planted model has two ratios; the CV-chosen k concentrates there
    let hits: usize = (0..100u64)
        .into_par_iter()
        .map(|rep| {
            let (d, _) = simulate::gen_experiment1(100, 30, 1.5, 50_000 + rep).unwrap();
            let w_raw = log_design(&d, false, false).unwrap();
            let folds = cv::make_folds(&d, 10, rep).unwrap();
            let centered = log_design(&d, true, false).unwrap();
            let gmax = solver::gamma_max(&centered.w, &d.y, Family::Gaussian);
            let ratio = (1e-2f64).powf(1.0 / 19.0);
            let lambdas: Vec<f64> = (0..20).map(|i| 2.0 * gmax * ratio.powi(i)).collect();
            let k_grid: Vec<usize> = (0..=5).collect();
            let curve = cv::cv_two_stage(
                &w_raw,
                &d.y,
                &folds,
                &lambdas,
                &k_grid,
                Family::Gaussian,
                false,
                CvRule::Min,
            )
            .unwrap();
            matches!(curve.chosen_point().steps, Some(2) | Some(3)) as usize
        })
        .sum();
    assert!(hits >= 70, "k in {{2,3}} chosen in only {hits}/100 runs");
}

#[test]
fn pure_noise_one_se_prefers_empty_model_100_runs() {
    let empty: usize = (0..100u64)
        .into_par_iter()
        .map(|rep| {
            let (d, _) = simulate::gen_experiment1(60, 10, 0.0, 60_000 + rep).unwrap();
            let w_raw = log_design(&d, false, false).unwrap();
            let folds = cv::make_folds(&d, 10, rep).unwrap();
            let spec = PathSpec {
                n_lambda: 20,
                lambda_min_ratio: 1e-2,
                rule: CvRule::OneSe,
            };
            let curve =
                cv::cv_constrained_lasso(&w_raw, &d.y, &folds, &spec, Family::Gaussian).unwrap();
            // the sparsest grid point is gamma_max, where the fit is empty
            (curve.chosen == 0) as usize
        })
        .sum();
    assert!(
        empty >= 80,
        "one-se rule chose the empty model in only {empty}/100 runs"
    );
}

#[test]
fn vanilla_lasso_selects_few_nulls_on_pure_noise() {
    use lrlasso::simulate::{Method, SimModel, SimSpec};
    let spec = SimSpec {
        n: 100,
        p: 30,
        s_grid: vec![0.0],
        model: SimModel::TwoRatio,
        reps: 50,
        seed: 77,
        methods: vec![Method::VanillaLasso],
    };
    let result = simulate::run_experiment(&spec).unwrap();
    let row = result.row(Method::VanillaLasso, 0.0).unwrap();
    assert!(
        row.nulls_selected < 0.3,
        "average null fraction {} on pure noise",
        row.nulls_selected
    );
    assert_eq!(row.failures, 0);
}

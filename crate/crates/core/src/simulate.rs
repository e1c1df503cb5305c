//! Reproducible simulation experiments and runtime benchmarks.
//!
//! Three data-generating processes are covered: a pure two-ratio model, a
//! misspecified variant with an unpaired log term, and the log-absolute-
//! Gaussian designs used to study the post-selective test. Replications use
//! common random numbers: every method inside a replication sees the same
//! train/test draw, and per-replication seeds are derived deterministically
//! from the master seed, so runs are bit-reproducible regardless of thread
//! count.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{self, CvRule, PathSpec};
use crate::data::{expand_ratios, log_design, Dataset, Family, LogDesign};
use crate::error::{Error, Result};
use crate::inference;
use crate::linalg;
use crate::logratio::{self, ContrastCoefficients, PairCoefficients};
use crate::solver::{self, LassoProblem};
use crate::stepwise;

/// Methods compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ApproxFs,
    Fs,
    Ridge,
    SingleStage,
    TwoStage,
    TwoStageConservative,
    VanillaLasso,
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![
            Method::ApproxFs,
            Method::Fs,
            Method::Ridge,
            Method::SingleStage,
            Method::TwoStage,
            Method::TwoStageConservative,
            Method::VanillaLasso,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::ApproxFs => "approx-fs",
            Method::Fs => "fs",
            Method::Ridge => "ridge",
            Method::SingleStage => "single-stage",
            Method::TwoStage => "two-stage",
            Method::TwoStageConservative => "two-stage-conservative",
            Method::VanillaLasso => "vanilla-lasso",
        }
    }
}

/// Data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    TwoRatio,
    Misspecified,
    PvalueNullRatio,
    PvalueNullSingle,
}

/// Experiment configuration.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub s_grid: Vec<f64>,
    pub model: SimModel,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("need reps >= 1".into()));
        }
        if self.s_grid.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidArgument("amplitudes must be >= 0".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods requested".into()));
        }
        Ok(())
    }
}

/// Aggregated metrics for one (method, amplitude) cell.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub method: &'static str,
    pub s: f64,
    /// Prediction MSE against the noiseless conditional mean at fresh test
    /// inputs; the headline metric (relative statements about method MSE are
    /// invisible under the irreducible-noise floor of the noisy version).
    pub test_mse: f64,
    /// Prediction MSE against the noisy test responses (test_mse plus the
    /// noise variance, up to Monte-Carlo error).
    pub noisy_test_mse: f64,
    /// Coefficient-space error ||beta-hat - beta*||^2.
    pub coef_mse: f64,
    pub bias2: f64,
    pub variance: f64,
    pub large_signal_recovery: f64,
    pub small_signal_recovery: f64,
    pub nulls_selected: f64,
    pub mean_seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub rows: Vec<MetricRow>,
    pub reps: usize,
}

impl SimResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "method\ts\ttest_mse\tnoisy_test_mse\tcoef_mse\tbias2\tvariance\tlarge_signal_recovery\tsmall_signal_recovery\tnulls_selected\tmean_seconds\tfailures\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{:.6}\t{:.6}\t{}\n",
                r.method,
                r.s,
                r.test_mse,
                r.noisy_test_mse,
                r.coef_mse,
                r.bias2,
                r.variance,
                r.large_signal_recovery,
                r.small_signal_recovery,
                r.nulls_selected,
                r.mean_seconds,
                r.failures
            ));
        }
        out
    }

    pub fn row(&self, method: Method, s: f64) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && (r.s - s).abs() < 1e-12)
    }
}

/// SplitMix64 step, used to derive independent per-replication seeds.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn abs_gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal).abs())
}

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Two log-ratio signals of amplitudes `2s` and `s` on absolute-Gaussian
/// features with standard normal noise.
pub fn gen_experiment1(
    n: usize,
    p: usize,
    s: f64,
    seed: u64,
) -> Result<(Dataset, PairCoefficients)> {
    if p < 4 {
        return Err(Error::InvalidArgument(format!(
            "experiment 1 needs p >= 4, got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = abs_gaussian_matrix(&mut rng, n, p);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let eps: f64 = rng.sample(StandardNormal);
        y[i] = 2.0 * s * (x[[i, 0]] / x[[i, 1]]).ln() + s * (x[[i, 2]] / x[[i, 3]]).ln() + eps;
    }
    let d = Dataset::new(x, y, feature_names(p), None, Family::Gaussian)?;
    let mut truth = PairCoefficients::new(p, 0.0);
    truth.insert(0, 1, 2.0 * s)?;
    truth.insert(2, 3, s)?;
    Ok((d, truth))
}

/// Experiment 1 plus an unpaired `0.3 log(x5)` term, so the log-ratio model
/// is misspecified (the true coefficient sum is 0.3, not zero).
pub fn gen_experiment2(
    n: usize,
    p: usize,
    s: f64,
    seed: u64,
) -> Result<(Dataset, ContrastCoefficients)> {
    if p < 5 {
        return Err(Error::InvalidArgument(format!(
            "experiment 2 needs p >= 5, got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = abs_gaussian_matrix(&mut rng, n, p);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let eps: f64 = rng.sample(StandardNormal);
        y[i] = 2.0 * s * (x[[i, 0]] / x[[i, 1]]).ln()
            + s * (x[[i, 2]] / x[[i, 3]]).ln()
            + 0.3 * x[[i, 4]].ln()
            + eps;
    }
    let d = Dataset::new(x, y, feature_names(p), None, Family::Gaussian)?;
    let mut beta = Array1::zeros(p);
    beta[0] = 2.0 * s;
    beta[1] = -2.0 * s;
    beta[2] = s;
    beta[3] = -s;
    beta[4] = 0.3;
    Ok((d, ContrastCoefficients::new_unchecked(beta, 0.0)))
}

/// Designs for the post-selective calibration study: the log design is the
/// log-absolute-Gaussian matrix itself, and the response is `W beta + N(0,I)`
/// with `beta = (2,-2,0,...)` (a single ratio, null true) or `(2,0,...)`
/// (unpaired, null false).
pub fn gen_pvalue_example(n: usize, p: usize, model: SimModel, seed: u64) -> Result<Dataset> {
    if p < 2 {
        return Err(Error::InvalidArgument("need p >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = abs_gaussian_matrix(&mut rng, n, p);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let eps: f64 = rng.sample(StandardNormal);
        let w1 = x[[i, 0]].ln();
        let w2 = x[[i, 1]].ln();
        y[i] = match model {
            SimModel::PvalueNullRatio => 2.0 * w1 - 2.0 * w2 + eps,
            SimModel::PvalueNullSingle => 2.0 * w1 + eps,
            _ => {
                return Err(Error::InvalidArgument(
                    "gen_pvalue_example expects a p-value model".into(),
                ))
            }
        };
    }
    Dataset::new(x, y, feature_names(p), None, Family::Gaussian)
}

/// A fitted model in log-feature space, with the selection bookkeeping the
/// support metrics need.
struct LinearFit {
    /// Coefficients on log features, natural scale.
    beta: Array1<f64>,
    /// Intercept on the natural scale.
    intercept: f64,
    /// Selected ratio pairs (ratio methods).
    pairs: Option<Vec<(usize, usize)>>,
    /// Selected features (feature-wise methods); `None` with no pairs means
    /// a dense fit.
    features: Option<Vec<usize>>,
}

impl LinearFit {
    fn predict(&self, d: &Dataset) -> Array1<f64> {
        let mut eta = Array1::from_elem(d.n(), self.intercept);
        for j in 0..d.p() {
            let b = self.beta[j];
            if b != 0.0 {
                for i in 0..d.n() {
                    eta[i] += b * d.x[[i, j]].ln();
                }
            }
        }
        eta
    }
}

fn raw_intercept(centered: &LogDesign, beta: &Array1<f64>, mu: f64) -> f64 {
    let mut out = mu;
    for j in 0..centered.p() {
        out -= beta[j] * centered.column_means[j];
    }
    out
}

fn fit_vanilla_lasso(d: &Dataset, folds: &cv::FoldPlan, spec: &PathSpec) -> Result<LinearFit> {
    let w_raw = log_design(d, false, false)?;
    let curve = cv::cv_lasso(&w_raw, &d.y, folds, spec, d.family)?;
    let lambda = curve.chosen_point().penalty;
    let centered = log_design(d, true, false)?;
    let prob = LassoProblem::unweighted(centered.w.clone(), d.y.clone(), lambda, d.family)?;
    let sol = solver::solve_lasso(&prob, None)?;
    let features = sol.support();
    Ok(LinearFit {
        intercept: raw_intercept(&centered, &sol.coefficients, sol.intercept),
        beta: sol.coefficients,
        pairs: None,
        features: Some(features),
    })
}

fn fit_single_stage_cv(d: &Dataset, folds: &cv::FoldPlan, spec: &PathSpec) -> Result<LinearFit> {
    let w_raw = log_design(d, false, false)?;
    let curve = cv::cv_constrained_lasso(&w_raw, &d.y, folds, spec, d.family)?;
    let gamma = curve.chosen_point().penalty;
    let centered = log_design(d, true, false)?;
    let (theta, contrast, _) =
        logratio::fit_single_stage(&centered, &d.y, 2.0 * gamma, d.family, false)?;
    Ok(LinearFit {
        beta: contrast.beta,
        intercept: contrast.intercept,
        pairs: Some(theta.selected_pairs()),
        features: None,
    })
}

fn fit_two_stage_cv(
    d: &Dataset,
    folds: &cv::FoldPlan,
    conservative: bool,
    lambda_grid: &[f64],
    k_grid: &[usize],
) -> Result<LinearFit> {
    let w_raw = log_design(d, false, false)?;
    let curve = cv::cv_two_stage(
        &w_raw,
        &d.y,
        folds,
        lambda_grid,
        k_grid,
        d.family,
        conservative,
        CvRule::Min,
    )?;
    let point = curve.chosen_point();
    let (theta, _) = cv::fit_two_stage_at(&w_raw, &d.y, point, d.family, conservative)?;
    let contrast = logratio::pairs_to_contrast(&theta);
    Ok(LinearFit {
        beta: contrast.beta,
        intercept: contrast.intercept,
        pairs: Some(theta.selected_pairs()),
        features: None,
    })
}

fn fit_approx_fs_cv(d: &Dataset, folds: &cv::FoldPlan, k_max: usize) -> Result<LinearFit> {
    let w_raw = log_design(d, false, false)?;
    let p = d.p();
    let mut fold_errors: Vec<Vec<f64>> = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let train_rows = folds.train_rows(f);
        let test_rows = folds.test_rows(f);
        let mut train_w = Array2::zeros((train_rows.len(), p));
        for (r, &i) in train_rows.iter().enumerate() {
            for j in 0..p {
                train_w[[r, j]] = w_raw.w[[i, j]];
            }
        }
        let train = LogDesign::from_log_matrix(train_w, true, true)?;
        let train_y = Array1::from_iter(train_rows.iter().map(|&i| d.y[i]));
        let trace = stepwise::approx_forward_stepwise(&train, &train_y, k_max)?;
        let mut errs = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let (sel, coefs, mu) = trace.model_at(k);
            let mut sse = 0.0;
            for &i in &test_rows {
                let mut eta = mu;
                for (c, &(a, b)) in sel.iter().enumerate() {
                    let za = w_raw.w[[i, a]] - train.column_means[a];
                    let zb = w_raw.w[[i, b]] - train.column_means[b];
                    eta += coefs[c] * (za - zb);
                }
                sse += (d.y[i] - eta) * (d.y[i] - eta);
            }
            errs.push(sse / test_rows.len() as f64);
        }
        fold_errors.push(errs);
    }
    let kf = folds.k as f64;
    let mean: Vec<f64> = (0..=k_max)
        .map(|k| fold_errors.iter().map(|e| e[k]).sum::<f64>() / kf)
        .collect();
    let k_star = mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);

    let full = log_design(d, true, true)?;
    let trace = stepwise::approx_forward_stepwise(&full, &d.y, k_star)?;
    let (sel, coefs, mu) = trace.model_at(k_star);
    let mut theta = PairCoefficients::new(p, 0.0);
    let mut intercept = mu;
    for (c, &(a, b)) in sel.iter().enumerate() {
        theta.insert(a, b, coefs[c])?;
        intercept -= coefs[c] * full.ratio_mean(a, b);
    }
    theta.intercept = intercept;
    let contrast = logratio::pairs_to_contrast(&theta);
    Ok(LinearFit {
        beta: contrast.beta,
        intercept: contrast.intercept,
        pairs: Some(theta.selected_pairs()),
        features: None,
    })
}

fn fit_fs_cv(d: &Dataset, folds: &cv::FoldPlan, k_max: usize) -> Result<LinearFit> {
    let w_raw = log_design(d, false, false)?;
    let p = d.p();
    let mut fold_errors: Vec<Vec<f64>> = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let train_rows = folds.train_rows(f);
        let test_rows = folds.test_rows(f);
        let mut train_w = Array2::zeros((train_rows.len(), p));
        for (r, &i) in train_rows.iter().enumerate() {
            for j in 0..p {
                train_w[[r, j]] = w_raw.w[[i, j]];
            }
        }
        let train = LogDesign::from_log_matrix(train_w, true, false)?;
        let train_y = Array1::from_iter(train_rows.iter().map(|&i| d.y[i]));
        let trace = stepwise::greedy_forward_columns(&train.w, &train_y, k_max)?;
        let mut errs = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let (sel, coefs, mu) = trace.model_at(k);
            let mut sse = 0.0;
            for &i in &test_rows {
                let mut eta = mu;
                for (c, &j) in sel.iter().enumerate() {
                    eta += coefs[c] * (w_raw.w[[i, j]] - train.column_means[j]);
                }
                sse += (d.y[i] - eta) * (d.y[i] - eta);
            }
            errs.push(sse / test_rows.len() as f64);
        }
        fold_errors.push(errs);
    }
    let kf = folds.k as f64;
    let mean: Vec<f64> = (0..=k_max)
        .map(|k| fold_errors.iter().map(|e| e[k]).sum::<f64>() / kf)
        .collect();
    let k_star = mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);

    let full = log_design(d, true, false)?;
    let trace = stepwise::greedy_forward_columns(&full.w, &d.y, k_star)?;
    let (sel, coefs, mu) = trace.model_at(k_star);
    let mut beta = Array1::zeros(p);
    for (c, &j) in sel.iter().enumerate() {
        beta[j] = coefs[c];
    }
    Ok(LinearFit {
        intercept: raw_intercept(&full, &beta, mu),
        beta,
        pairs: None,
        features: Some(sel.to_vec()),
    })
}

fn fit_ridge_cv(d: &Dataset, folds: &cv::FoldPlan) -> Result<LinearFit> {
    let w_raw = log_design(d, false, false)?;
    let p = d.p();
    let n_alpha = 20;
    let alphas: Vec<f64> = (0..n_alpha)
        .map(|i| 1e-2 * (1e6f64).powf(i as f64 / (n_alpha as f64 - 1.0)))
        .collect();

    let ridge_solve = |wc: &LogDesign, y: &Array1<f64>, alpha: f64| -> Result<(Array1<f64>, f64)> {
        let ybar = y.sum() / y.len() as f64;
        let yc = y.mapv(|v| v - ybar);
        let mut gram = wc.w.t().dot(&wc.w);
        for j in 0..p {
            gram[[j, j]] += alpha;
        }
        let rhs = wc.w.t().dot(&yc);
        Ok((linalg::solve(&gram, &rhs)?, ybar))
    };

    let mut fold_errors: Vec<Vec<f64>> = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let train_rows = folds.train_rows(f);
        let test_rows = folds.test_rows(f);
        let mut train_w = Array2::zeros((train_rows.len(), p));
        for (r, &i) in train_rows.iter().enumerate() {
            for j in 0..p {
                train_w[[r, j]] = w_raw.w[[i, j]];
            }
        }
        let train = LogDesign::from_log_matrix(train_w, true, false)?;
        let train_y = Array1::from_iter(train_rows.iter().map(|&i| d.y[i]));
        let mut errs = Vec::with_capacity(alphas.len());
        for &alpha in &alphas {
            let (beta, mu) = ridge_solve(&train, &train_y, alpha)?;
            let mut sse = 0.0;
            for &i in &test_rows {
                let mut eta = mu;
                for j in 0..p {
                    eta += beta[j] * (w_raw.w[[i, j]] - train.column_means[j]);
                }
                sse += (d.y[i] - eta) * (d.y[i] - eta);
            }
            errs.push(sse / test_rows.len() as f64);
        }
        fold_errors.push(errs);
    }
    let kf = folds.k as f64;
    let mean: Vec<f64> = (0..alphas.len())
        .map(|a| fold_errors.iter().map(|e| e[a]).sum::<f64>() / kf)
        .collect();
    let a_star = mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);

    let full = log_design(d, true, false)?;
    let (beta, mu) = ridge_solve(&full, &d.y, alphas[a_star])?;
    Ok(LinearFit {
        intercept: raw_intercept(&full, &beta, mu),
        beta,
        pairs: None,
        features: None,
    })
}

struct RepMetrics {
    test_mse: f64,
    noisy_test_mse: f64,
    coef_mse: f64,
    fixed_preds: Vec<f64>,
    large: f64,
    small: f64,
    nulls: f64,
    seconds: f64,
}

/// True signal (noise-free conditional mean) of a model at given inputs.
fn true_signal(model: SimModel, s: f64, x: &Array2<f64>) -> Array1<f64> {
    let n = x.nrows();
    Array1::from_shape_fn(n, |i| {
        let base = 2.0 * s * (x[[i, 0]] / x[[i, 1]]).ln() + s * (x[[i, 2]] / x[[i, 3]]).ln();
        match model {
            SimModel::Misspecified => base + 0.3 * x[[i, 4]].ln(),
            _ => base,
        }
    })
}

fn truth_beta(model: SimModel, s: f64, p: usize) -> Array1<f64> {
    let mut beta = Array1::zeros(p);
    beta[0] = 2.0 * s;
    beta[1] = -2.0 * s;
    beta[2] = s;
    beta[3] = -s;
    if model == SimModel::Misspecified {
        beta[4] = 0.3;
    }
    beta
}

fn truth_pairs(s: f64) -> Vec<(usize, usize)> {
    if s > 0.0 {
        vec![(0, 1), (2, 3)]
    } else {
        Vec::new()
    }
}

fn truth_features(model: SimModel, s: f64) -> Vec<usize> {
    let mut f = if s > 0.0 { vec![0, 1, 2, 3] } else { Vec::new() };
    if model == SimModel::Misspecified {
        f.push(4);
    }
    f
}

/// Support metrics for one fit: recovery of the large and small planted
/// ratios and the fraction of selected nulls. Ratio methods count at the
/// pair level over `C(p,2)` candidates, feature-wise methods at the raw
/// feature level; dense fits (ridge) count as selecting everything.
fn support_metrics(fit: &LinearFit, model: SimModel, s: f64, p: usize) -> (f64, f64, f64) {
    let t_pairs = truth_pairs(s);
    let t_feats = truth_features(model, s);
    if let Some(pairs) = &fit.pairs {
        let large = pairs.contains(&(0, 1)) as u8 as f64;
        let small = pairs.contains(&(2, 3)) as u8 as f64;
        let false_pairs = pairs.iter().filter(|pr| !t_pairs.contains(pr)).count();
        let total_null_pairs = p * (p - 1) / 2 - t_pairs.len();
        (large, small, false_pairs as f64 / total_null_pairs.max(1) as f64)
    } else if let Some(feats) = &fit.features {
        let large = (feats.contains(&0) && feats.contains(&1)) as u8 as f64;
        let small = (feats.contains(&2) && feats.contains(&3)) as u8 as f64;
        let false_feats = feats.iter().filter(|j| !t_feats.contains(j)).count();
        let total_nulls = p - t_feats.len();
        (large, small, false_feats as f64 / total_nulls.max(1) as f64)
    } else {
        // dense fit
        (1.0, 1.0, 1.0)
    }
}

fn fit_method(
    method: Method,
    d: &Dataset,
    folds: &cv::FoldPlan,
    lambda_grid: &[f64],
    k_grid: &[usize],
) -> Result<LinearFit> {
    let spec = PathSpec {
        n_lambda: 25,
        lambda_min_ratio: 1e-3,
        rule: CvRule::Min,
    };
    match method {
        Method::VanillaLasso => fit_vanilla_lasso(d, folds, &spec),
        Method::SingleStage => fit_single_stage_cv(d, folds, &spec),
        Method::TwoStage => fit_two_stage_cv(d, folds, false, lambda_grid, k_grid),
        Method::TwoStageConservative => fit_two_stage_cv(d, folds, true, lambda_grid, k_grid),
        Method::ApproxFs => fit_approx_fs_cv(d, folds, 10),
        Method::Fs => fit_fs_cv(d, folds, 10),
        Method::Ridge => fit_ridge_cv(d, folds),
    }
}

/// Runs the requested experiment grid. Within a replication all methods see
/// the same train and test draws (paired seeds); per-replication failures
/// are counted and excluded from the aggregates.
pub fn run_experiment(spec: &SimSpec) -> Result<SimResult> {
    spec.validate()?;
    let gen = |s: f64, seed: u64| -> Result<Dataset> {
        match spec.model {
            SimModel::TwoRatio => Ok(gen_experiment1(spec.n, spec.p, s, seed)?.0),
            SimModel::Misspecified => Ok(gen_experiment2(spec.n, spec.p, s, seed)?.0),
            other => Err(Error::InvalidArgument(format!(
                "run_experiment does not cover {other:?}; use run_pvalue_study"
            ))),
        }
    };
    // fail fast on unsupported models
    gen(spec.s_grid[0], 0)?;

    // fixed evaluation inputs for the bias/variance decomposition
    let n_fixed = 50;
    let fixed_x = {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0xF1CED));
        abs_gaussian_matrix(&mut rng, n_fixed, spec.p)
    };
    let fixed_dataset = Dataset::new(
        fixed_x.clone(),
        Array1::zeros(n_fixed),
        feature_names(spec.p),
        None,
        Family::Gaussian,
    )?;

    let k_grid: Vec<usize> = (0..=5).collect();
    let mut rows = Vec::new();
    for (si, &s) in spec.s_grid.iter().enumerate() {
        let outcomes: Vec<Vec<Option<RepMetrics>>> = (0..spec.reps)
            .into_par_iter()
            .map(|rep| {
                let rep_salt = ((si as u64) << 32) | rep as u64;
                let train = match gen(s, mix(spec.seed, mix(1, rep_salt))) {
                    Ok(d) => d,
                    Err(_) => return (0..spec.methods.len()).map(|_| None).collect(),
                };
                let test = match gen(s, mix(spec.seed, mix(2, rep_salt))) {
                    Ok(d) => d,
                    Err(_) => return (0..spec.methods.len()).map(|_| None).collect(),
                };
                let folds = match cv::make_folds(&train, 10, mix(spec.seed, mix(3, rep_salt))) {
                    Ok(f) => f,
                    Err(_) => return (0..spec.methods.len()).map(|_| None).collect(),
                };
                // shared stage-one grid for the two-stage variants
                let lambda_grid: Vec<f64> = {
                    let gmax = log_design(&train, true, false)
                        .map(|ld| solver::gamma_max(&ld.w, &train.y, Family::Gaussian))
                        .unwrap_or(1.0);
                    let n_l = 20;
                    let ratio = (1e-2f64).powf(1.0 / (n_l as f64 - 1.0));
                    (0..n_l).map(|i| 2.0 * gmax * ratio.powi(i)).collect()
                };
                let signal_test = true_signal(spec.model, s, &test.x);
                let beta_star = truth_beta(spec.model, s, spec.p);

                spec.methods
                    .iter()
                    .map(|&m| {
                        let t0 = Instant::now();
                        let fit = fit_method(m, &train, &folds, &lambda_grid, &k_grid).ok()?;
                        let seconds = t0.elapsed().as_secs_f64();
                        let pred_test = fit.predict(&test);
                        let noisy_test_mse = pred_test
                            .iter()
                            .zip(test.y.iter())
                            .map(|(p, y)| (p - y) * (p - y))
                            .sum::<f64>()
                            / test.n() as f64;
                        let test_mse = pred_test
                            .iter()
                            .zip(signal_test.iter())
                            .map(|(p, f)| (p - f) * (p - f))
                            .sum::<f64>()
                            / test.n() as f64;
                        let coef_mse = fit
                            .beta
                            .iter()
                            .zip(beta_star.iter())
                            .map(|(b, t)| (b - t) * (b - t))
                            .sum::<f64>();
                        let fixed_preds = fit.predict(&fixed_dataset).to_vec();
                        let (large, small, nulls) = support_metrics(&fit, spec.model, s, spec.p);
                        Some(RepMetrics {
                            test_mse,
                            noisy_test_mse,
                            coef_mse,
                            fixed_preds,
                            large,
                            small,
                            nulls,
                            seconds,
                        })
                    })
                    .collect()
            })
            .collect();

        let signal_fixed = true_signal(spec.model, s, &fixed_x);
        for (mi, &m) in spec.methods.iter().enumerate() {
            let done: Vec<&RepMetrics> = outcomes
                .iter()
                .filter_map(|reps| reps[mi].as_ref())
                .collect();
            let failures = spec.reps - done.len();
            let cnt = done.len().max(1) as f64;
            let mean = |f: fn(&RepMetrics) -> f64| done.iter().map(|r| f(r)).sum::<f64>() / cnt;
            let (mut bias2, mut variance) = (0.0, 0.0);
            if !done.is_empty() {
                for j in 0..n_fixed {
                    let preds: Vec<f64> = done.iter().map(|r| r.fixed_preds[j]).collect();
                    let pm = preds.iter().sum::<f64>() / preds.len() as f64;
                    let b = pm - signal_fixed[j];
                    bias2 += b * b;
                    variance +=
                        preds.iter().map(|p| (p - pm) * (p - pm)).sum::<f64>() / preds.len() as f64;
                }
                bias2 /= n_fixed as f64;
                variance /= n_fixed as f64;
            }
            rows.push(MetricRow {
                method: m.name(),
                s,
                test_mse: mean(|r| r.test_mse),
                noisy_test_mse: mean(|r| r.noisy_test_mse),
                coef_mse: mean(|r| r.coef_mse),
                bias2,
                variance,
                large_signal_recovery: mean(|r| r.large),
                small_signal_recovery: mean(|r| r.small),
                nulls_selected: mean(|r| r.nulls),
                mean_seconds: mean(|r| r.seconds),
                failures,
            });
        }
    }
    Ok(SimResult {
        rows,
        reps: spec.reps,
    })
}

/// Outcome of the post-selective calibration study.
#[derive(Debug, Clone, Serialize)]
pub struct PvalueStudy {
    pub pvalues: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_critical_1pct: f64,
    pub mean_p: f64,
    /// Replications whose selection contained the truth support (the ones
    /// the conditional p-values come from).
    pub conditioned: usize,
    pub total: usize,
    pub skipped_errors: usize,
}

/// Monte-Carlo study of the post-selective p-value: repeatedly draws a
/// design and response, runs the lasso at `lambda` on the centered log
/// design, and computes the conditional p-value whenever the truth support
/// was selected.
pub fn run_pvalue_study(
    n: usize,
    p: usize,
    model: SimModel,
    reps: usize,
    lambda: f64,
    sigma: f64,
    seed: u64,
) -> Result<PvalueStudy> {
    let required: &[usize] = match model {
        SimModel::PvalueNullRatio => &[0, 1],
        SimModel::PvalueNullSingle => &[0],
        other => {
            return Err(Error::InvalidArgument(format!(
                "run_pvalue_study expects a p-value model, got {other:?}"
            )))
        }
    };
    let results: Vec<Option<Option<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let d = gen_pvalue_example(n, p, model, mix(seed, rep as u64)).ok()?;
            let w = log_design(&d, true, false).ok()?;
            let event = inference::lasso_selection_event(&w.w, &d.y, lambda).ok()?;
            if !required.iter().all(|j| event.support.contains(j)) {
                return Some(None);
            }
            let pivot = inference::selective_sum_zero_test(&event, &w.w, &d.y, sigma).ok()?;
            Some(Some(pivot.p_one_sided))
        })
        .collect();

    let skipped_errors = results.iter().filter(|r| r.is_none()).count();
    let pvalues: Vec<f64> = results.iter().filter_map(|r| (*r).flatten()).collect();
    if pvalues.is_empty() {
        return Err(Error::NoTest(
            "no replication selected the truth support".into(),
        ));
    }
    let ks = inference::ks_uniform_statistic(&pvalues);
    let mean_p = pvalues.iter().sum::<f64>() / pvalues.len() as f64;
    Ok(PvalueStudy {
        ks_statistic: ks,
        ks_critical_1pct: inference::ks_uniform_critical(pvalues.len(), 0.01),
        mean_p,
        conditioned: pvalues.len(),
        total: reps,
        skipped_errors,
        pvalues,
    })
}

/// One cell of the runtime comparison.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub p: usize,
    /// Median seconds, or `None` when the expanded matrix would exceed the
    /// memory cap.
    pub median_seconds: Option<f64>,
}

/// Benchmarks the implicit-ratio procedures against their expanded-matrix
/// counterparts: approximate forward stepwise vs exact forward stepwise on
/// all `C(p,2)` ratio columns, and the constrained lasso vs the plain lasso
/// on the same expanded matrix. Timing runs sequentially; the expansion cost
/// is charged to the expanded methods.
pub fn run_runtime_bench(
    p_grid: &[usize],
    n: usize,
    k: usize,
    reps: usize,
    seed: u64,
    mem_cap_bytes: usize,
) -> Result<Vec<BenchRow>> {
    if p_grid.is_empty() || reps == 0 {
        return Err(Error::InvalidArgument("empty bench grid".into()));
    }
    let mut rows = Vec::new();
    for &p in p_grid {
        let (d, _) = gen_experiment1(n, p, 1.5, mix(seed, p as u64))?;
        let std_design = log_design(&d, true, true)?;
        let centered = log_design(&d, true, false)?;
        let gamma = 0.1 * solver::gamma_max(&centered.w, &d.y, Family::Gaussian);
        let expanded_bytes = n * p * (p - 1) / 2 * std::mem::size_of::<f64>();
        let expanded_ok = expanded_bytes <= mem_cap_bytes;

        let median = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };

        let mut t_approx = Vec::with_capacity(reps);
        let mut t_exact = Vec::with_capacity(reps);
        let mut t_constrained = Vec::with_capacity(reps);
        let mut t_naive = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            stepwise::approx_forward_stepwise(&std_design, &d.y, k)?;
            t_approx.push(t0.elapsed().as_secs_f64());

            let t0 = Instant::now();
            solver::constrained_lasso(&centered, &d.y, gamma, Family::Gaussian, None)?;
            t_constrained.push(t0.elapsed().as_secs_f64());

            if expanded_ok {
                let t0 = Instant::now();
                let (z, pairs) = expand_ratios(&std_design, None)?;
                stepwise::exact_forward_stepwise(&z, &pairs, &d.y, k)?;
                t_exact.push(t0.elapsed().as_secs_f64());

                let t0 = Instant::now();
                let (z, _) = expand_ratios(&centered, None)?;
                let prob = LassoProblem::unweighted(z, d.y.clone(), 2.0 * gamma, Family::Gaussian)?;
                solver::solve_lasso(&prob, None)?;
                t_naive.push(t0.elapsed().as_secs_f64());
            }
        }
        rows.push(BenchRow {
            method: "approx-fs".into(),
            p,
            median_seconds: Some(median(t_approx)),
        });
        rows.push(BenchRow {
            method: "exact-fs-expanded".into(),
            p,
            median_seconds: expanded_ok.then(|| median(t_exact)),
        });
        rows.push(BenchRow {
            method: "constrained-lasso".into(),
            p,
            median_seconds: Some(median(t_constrained)),
        });
        rows.push(BenchRow {
            method: "lasso-expanded".into(),
            p,
            median_seconds: expanded_ok.then(|| median(t_naive)),
        });
    }
    Ok(rows)
}

pub fn bench_tsv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method\tp\tmedian_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            r.method,
            r.p,
            r.median_seconds
                .map(|s| format!("{s:.6}"))
                .unwrap_or_else(|| "infeasible".into())
        ));
    }
    out
}

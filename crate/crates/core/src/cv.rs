//! K-fold and group-blocked cross-validation.
//!
//! Fold centering is recomputed from the training rows of every split, and
//! test-row predictions use the training means, so no stage of a fit sees
//! held-out rows. Penalty grids are shared across folds (computed once from
//! the full data) so fold curves aggregate pointwise.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{expand_ratios, Dataset, Family, LogDesign};
use crate::error::{Error, Result};
use crate::logratio;
use crate::solver::{self, LassoProblem, LassoSolution};
use crate::stepwise;

/// Fold assignment for n observations.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    /// Per-row fold label in `0..k`.
    pub assignments: Vec<usize>,
    pub k: usize,
    /// Group column name when the assignment is blocked.
    pub blocked_by: Option<String>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Builds a balanced random fold plan. When the dataset carries group labels
/// the assignment is blocked: groups are shuffled and each lands entirely in
/// one fold, so correlated observations never straddle a split.
pub fn make_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = d.n();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need K >= 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "K = {k} folds exceed n = {n} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; n];
    match &d.group_ids {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (pos, &row) in order.iter().enumerate() {
                assignments[row] = pos % k;
            }
        }
        Some(groups) => {
            // distinct groups in first-appearance order, then shuffled
            let mut distinct: Vec<&String> = Vec::new();
            for g in groups {
                if !distinct.contains(&g) {
                    distinct.push(g);
                }
            }
            if distinct.len() < k {
                return Err(Error::InvalidArgument(format!(
                    "{} distinct groups cannot fill K = {k} folds",
                    distinct.len()
                )));
            }
            let mut order: Vec<usize> = (0..distinct.len()).collect();
            order.shuffle(&mut rng);
            // greedy: each group joins the currently smallest fold
            let mut fold_sizes = vec![0usize; k];
            let mut group_fold = vec![0usize; distinct.len()];
            for &g in &order {
                let count = groups.iter().filter(|x| *x == distinct[g]).count();
                let target = (0..k).min_by_key(|&f| fold_sizes[f]).unwrap();
                group_fold[g] = target;
                fold_sizes[target] += count;
            }
            for (i, g) in groups.iter().enumerate() {
                let gi = distinct.iter().position(|x| *x == g).unwrap();
                assignments[i] = group_fold[gi];
            }
        }
    }
    let plan = FoldPlan {
        assignments,
        k,
        blocked_by: d.group_ids.as_ref().map(|_| "group".to_string()),
        seed,
    };
    for f in 0..k {
        if plan.test_rows(f).is_empty() {
            return Err(Error::DegenerateFold(format!("fold {f} is empty")));
        }
    }
    Ok(plan)
}

/// Model-selection rule on a CV curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    Min,
    OneSe,
}

/// One point of a tuning grid: a penalty and, for two-stage fits, a step
/// count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvPoint {
    pub penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

/// Cross-validation curve over a tuning grid, ordered sparsest-first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvCurve {
    pub grid: Vec<CvPoint>,
    pub mean_error: Vec<f64>,
    pub se_error: Vec<f64>,
    pub chosen: usize,
    pub rule: CvRule,
    /// Held-out misclassification rates, binomial fits only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub misclassification: Option<Vec<f64>>,
}

impl CvCurve {
    /// Aggregates per-fold error rows (fold x grid) into the curve.
    fn from_fold_errors(
        grid: Vec<CvPoint>,
        fold_errors: &[Vec<f64>],
        misclass: Option<Vec<f64>>,
        rule: CvRule,
    ) -> Self {
        let k = fold_errors.len() as f64;
        let g = grid.len();
        let mut mean = vec![0.0; g];
        let mut se = vec![0.0; g];
        for j in 0..g {
            let column: Vec<f64> = fold_errors.iter().map(|f| f[j]).collect();
            let m = column.iter().sum::<f64>() / k;
            let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1.0).max(1.0);
            mean[j] = m;
            se[j] = (var / k).sqrt();
        }
        let chosen = choose(&mean, &se, rule);
        CvCurve {
            grid,
            mean_error: mean,
            se_error: se,
            chosen,
            rule,
            misclassification: misclass,
        }
    }

    pub fn chosen_point(&self) -> CvPoint {
        self.grid[self.chosen]
    }
}

/// Index selection: plain argmin, or the sparsest grid point whose mean lies
/// within one standard error of the argmin (the grid is ordered
/// sparsest-first so that is the earliest qualifying index).
fn choose(mean: &[f64], se: &[f64], rule: CvRule) -> usize {
    let argmin = mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    match rule {
        CvRule::Min => argmin,
        CvRule::OneSe => {
            let bar = mean[argmin] + se[argmin];
            (0..mean.len()).find(|&i| mean[i] <= bar).unwrap_or(argmin)
        }
    }
}

/// Path grid specification.
#[derive(Debug, Clone, Copy)]
pub struct PathSpec {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub rule: CvRule,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            n_lambda: 30,
            lambda_min_ratio: 1e-3,
            rule: CvRule::Min,
        }
    }
}

/// Training-fold view of a raw (uncentered, unscaled) log design: centered
/// training matrix plus training-mean-centered test rows.
struct FoldDesign {
    train: LogDesign,
    train_y: Array1<f64>,
    test_w: Array2<f64>,
    test_y: Array1<f64>,
}

fn split_design(
    w: &LogDesign,
    y: &Array1<f64>,
    train_rows: &[usize],
    test_rows: &[usize],
) -> Result<FoldDesign> {
    let p = w.p();
    let mut train_w = Array2::zeros((train_rows.len(), p));
    for (r, &i) in train_rows.iter().enumerate() {
        for j in 0..p {
            train_w[[r, j]] = w.w[[i, j]];
        }
    }
    let train = LogDesign::from_log_matrix(train_w, true, false)?;
    let mut test_w = Array2::zeros((test_rows.len(), p));
    for (r, &i) in test_rows.iter().enumerate() {
        for j in 0..p {
            test_w[[r, j]] = w.w[[i, j]] - train.column_means[j];
        }
    }
    Ok(FoldDesign {
        train,
        train_y: Array1::from_iter(train_rows.iter().map(|&i| y[i])),
        test_w,
        test_y: Array1::from_iter(test_rows.iter().map(|&i| y[i])),
    })
}

fn check_binomial_folds(y: &Array1<f64>, folds: &FoldPlan) -> Result<()> {
    for f in 0..folds.k {
        let train = folds.train_rows(f);
        let ones = train.iter().filter(|&&i| y[i] == 1.0).count();
        if ones == 0 || ones == train.len() {
            return Err(Error::DegenerateFold(format!(
                "training split of fold {f} has a constant binomial response"
            )));
        }
    }
    Ok(())
}

/// Held-out error: MSE for Gaussian fits, (mean deviance, misclassification)
/// for binomial ones.
fn heldout_error(family: Family, eta: &Array1<f64>, y: &Array1<f64>) -> (f64, f64) {
    let m = y.len() as f64;
    match family {
        Family::Gaussian => {
            let mse = eta
                .iter()
                .zip(y.iter())
                .map(|(e, yi)| (yi - e) * (yi - e))
                .sum::<f64>()
                / m;
            (mse, f64::NAN)
        }
        Family::Binomial => {
            let mut dev = 0.0;
            let mut miss = 0.0;
            for (e, yi) in eta.iter().zip(y.iter()) {
                let p = (1.0 / (1.0 + (-e).exp())).clamp(1e-12, 1.0 - 1e-12);
                dev += -2.0 * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
                if (p >= 0.5) != (*yi == 1.0) {
                    miss += 1.0;
                }
            }
            (dev / m, miss / m)
        }
    }
}

fn shared_grid(
    w: &LogDesign,
    y: &Array1<f64>,
    family: Family,
    spec: &PathSpec,
) -> Result<Vec<f64>> {
    if spec.n_lambda < 2 {
        return Err(Error::InvalidArgument("need at least 2 path points".into()));
    }
    let full = LogDesign::from_log_matrix(w.w.clone(), true, false)?;
    let gmax = solver::gamma_max(&full.w, y, family).max(1e-300);
    let ratio = spec
        .lambda_min_ratio
        .powf(1.0 / (spec.n_lambda as f64 - 1.0));
    Ok((0..spec.n_lambda)
        .map(|i| gmax * ratio.powi(i as i32))
        .collect())
}

/// Cross-validated constrained-lasso path. The gamma grid comes from the
/// full data; per-fold paths are warm-started from large to small penalties.
///
/// `w` must be the raw (uncentered, unscaled) log design; fold centering is
/// internal.
pub fn cv_constrained_lasso(
    w: &LogDesign,
    y: &Array1<f64>,
    folds: &FoldPlan,
    spec: &PathSpec,
    family: Family,
) -> Result<CvCurve> {
    if w.centered || w.scaled {
        return Err(Error::InvalidArgument(
            "cross-validation expects the raw log design; centering is per fold".into(),
        ));
    }
    if family == Family::Binomial {
        check_binomial_folds(y, folds)?;
    }
    let grid = shared_grid(w, y, family, spec)?;

    let mut fold_errors = Vec::with_capacity(folds.k);
    let mut fold_miss = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let fd = split_design(w, y, &folds.train_rows(f), &folds.test_rows(f))?;
        let mut errs = Vec::with_capacity(grid.len());
        let mut misses = Vec::with_capacity(grid.len());
        let mut warm: Option<LassoSolution> = None;
        for &g in &grid {
            let sol = solver::constrained_lasso(&fd.train, &fd.train_y, g, family, warm.as_ref())?;
            let eta = fd.test_w.dot(&sol.coefficients) + sol.intercept;
            let (e, miss) = heldout_error(family, &eta, &fd.test_y);
            errs.push(e);
            misses.push(miss);
            warm = Some(sol);
        }
        fold_errors.push(errs);
        fold_miss.push(misses);
    }
    let misclass = if family == Family::Binomial {
        let k = folds.k as f64;
        Some(
            (0..grid.len())
                .map(|j| fold_miss.iter().map(|f| f[j]).sum::<f64>() / k)
                .collect(),
        )
    } else {
        None
    };
    let points = grid
        .iter()
        .map(|&g| CvPoint {
            penalty: g,
            steps: None,
        })
        .collect();
    Ok(CvCurve::from_fold_errors(
        points,
        &fold_errors,
        misclass,
        spec.rule,
    ))
}

/// Cross-validated standard lasso on the log features (no sum-zero
/// constraint); the vanilla baseline.
pub fn cv_lasso(
    w: &LogDesign,
    y: &Array1<f64>,
    folds: &FoldPlan,
    spec: &PathSpec,
    family: Family,
) -> Result<CvCurve> {
    if w.centered || w.scaled {
        return Err(Error::InvalidArgument(
            "cross-validation expects the raw log design; centering is per fold".into(),
        ));
    }
    if family == Family::Binomial {
        check_binomial_folds(y, folds)?;
    }
    let grid = shared_grid(w, y, family, spec)?;

    let mut fold_errors = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let fd = split_design(w, y, &folds.train_rows(f), &folds.test_rows(f))?;
        let mut errs = Vec::with_capacity(grid.len());
        let mut warm: Option<LassoSolution> = None;
        for &l in &grid {
            let prob =
                LassoProblem::unweighted(fd.train.w.clone(), fd.train_y.clone(), l, family)?;
            let sol = solver::solve_lasso(&prob, warm.as_ref())?;
            let eta = fd.test_w.dot(&sol.coefficients) + sol.intercept;
            let (e, _) = heldout_error(family, &eta, &fd.test_y);
            errs.push(e);
            warm = Some(sol);
        }
        fold_errors.push(errs);
    }
    let points = grid
        .iter()
        .map(|&l| CvPoint {
            penalty: l,
            steps: None,
        })
        .collect();
    Ok(CvCurve::from_fold_errors(points, &fold_errors, None, spec.rule))
}

/// Joint (lambda, k) cross-validation of the two-stage procedure. Stage-one
/// paths are warm-started across lambda within each fold; the stage-two
/// stepwise trace is computed once per lambda up to `max(k_grid)` and
/// truncated per k. Grid points whose stage errors out are marked with
/// infinite error rather than aborting the grid.
#[allow(clippy::too_many_arguments)]
pub fn cv_two_stage(
    w: &LogDesign,
    y: &Array1<f64>,
    folds: &FoldPlan,
    lambda_grid: &[f64],
    k_grid: &[usize],
    family: Family,
    conservative: bool,
    rule: CvRule,
) -> Result<CvCurve> {
    if w.centered || w.scaled {
        return Err(Error::InvalidArgument(
            "cross-validation expects the raw log design; centering is per fold".into(),
        ));
    }
    if lambda_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::InvalidArgument("empty tuning grid".into()));
    }
    if family == Family::Binomial {
        check_binomial_folds(y, folds)?;
    }
    // sparsest-first ordering: descending lambda outer, ascending k inner
    let mut lambdas = lambda_grid.to_vec();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut ks = k_grid.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let kmax = *ks.last().unwrap();

    let grid: Vec<CvPoint> = lambdas
        .iter()
        .flat_map(|&l| {
            ks.iter().map(move |&k| CvPoint {
                penalty: l,
                steps: Some(k),
            })
        })
        .collect();

    let mut fold_errors = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let fd = split_design(w, y, &folds.train_rows(f), &folds.test_rows(f))?;
        let mut errs = Vec::with_capacity(grid.len());
        let mut warm: Option<LassoSolution> = None;
        for &lambda in &lambdas {
            let stage1 = solver::constrained_lasso(
                &fd.train,
                &fd.train_y,
                lambda / 2.0,
                family,
                warm.as_ref(),
            );
            let stage1 = match stage1 {
                Ok(s) => {
                    warm = Some(s.clone());
                    s
                }
                Err(_) => {
                    errs.extend(std::iter::repeat_n(f64::INFINITY, ks.len()));
                    continue;
                }
            };
            let support: Vec<usize> = stage1.support();
            match two_stage_fold_errors(&fd, &stage1, &support, &ks, kmax, family, conservative) {
                Ok(v) => errs.extend(v),
                Err(_) => errs.extend(std::iter::repeat_n(f64::INFINITY, ks.len())),
            }
        }
        fold_errors.push(errs);
    }
    Ok(CvCurve::from_fold_errors(grid, &fold_errors, None, rule))
}

/// Held-out errors of the stage-two models at every k in `ks`.
fn two_stage_fold_errors(
    fd: &FoldDesign,
    stage1: &LassoSolution,
    support: &[usize],
    ks: &[usize],
    kmax: usize,
    family: Family,
    conservative: bool,
) -> Result<Vec<f64>> {
    let trace = if support.len() < 2 || kmax == 0 {
        None
    } else {
        let target = if conservative {
            let mut eta = fd.train.w.dot(&stage1.coefficients);
            eta.mapv_inplace(|v| v + stage1.intercept);
            eta
        } else {
            fd.train_y.clone()
        };
        let (z, pair_index) = expand_ratios(&fd.train, Some(support))?;
        Some(stepwise::exact_forward_stepwise(
            &z,
            &pair_index,
            &target,
            kmax,
        )?)
    };

    let intercept_eta = |mu: f64| Array1::from_elem(fd.test_y.len(), mu);
    let null_mu = {
        let n = fd.train_y.len() as f64;
        match family {
            Family::Gaussian => fd.train_y.sum() / n,
            Family::Binomial => {
                let pbar = (fd.train_y.sum() / n).clamp(1e-12, 1.0 - 1e-12);
                (pbar / (1.0 - pbar)).ln()
            }
        }
    };

    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let eta: Array1<f64> = match &trace {
            None => intercept_eta(null_mu),
            Some(tr) if k == 0 || tr.selected.is_empty() => intercept_eta(null_mu),
            Some(tr) => {
                let (sel, coefs, mu) = tr.model_at(k);
                if family == Family::Binomial && !conservative {
                    // refit on the training response by unpenalized IRLS
                    let mut zsel = Array2::zeros((fd.train_y.len(), sel.len()));
                    for (c, &(a, b)) in sel.iter().enumerate() {
                        for i in 0..fd.train_y.len() {
                            zsel[[i, c]] = fd.train.w[[i, a]] - fd.train.w[[i, b]];
                        }
                    }
                    let prob =
                        LassoProblem::unweighted(zsel, fd.train_y.clone(), 0.0, Family::Binomial)?;
                    let sol = solver::solve_lasso(&prob, None)?;
                    let mut eta = Array1::from_elem(fd.test_y.len(), sol.intercept);
                    for (c, &(a, b)) in sel.iter().enumerate() {
                        for i in 0..fd.test_y.len() {
                            eta[i] += sol.coefficients[c] * (fd.test_w[[i, a]] - fd.test_w[[i, b]]);
                        }
                    }
                    eta
                } else {
                    let mut eta = Array1::from_elem(fd.test_y.len(), mu);
                    for (c, &(a, b)) in sel.iter().enumerate() {
                        for i in 0..fd.test_y.len() {
                            eta[i] += coefs[c] * (fd.test_w[[i, a]] - fd.test_w[[i, b]]);
                        }
                    }
                    eta
                }
            }
        };
        let (e, _) = heldout_error(family, &eta, &fd.test_y);
        out.push(e);
    }
    Ok(out)
}

/// Fits the chosen two-stage model on the full data after [`cv_two_stage`].
pub fn fit_two_stage_at(
    w: &LogDesign,
    y: &Array1<f64>,
    point: CvPoint,
    family: Family,
    conservative: bool,
) -> Result<(logratio::PairCoefficients, logratio::FitReport)> {
    let centered = LogDesign::from_log_matrix(w.w.clone(), true, false)?;
    logratio::fit_two_stage(
        &centered,
        y,
        point.penalty,
        point.steps.unwrap_or(0),
        family,
        conservative,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    fn toy_dataset(n: usize, p: usize, seed: u64, groups: Option<usize>) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let group_ids = groups.map(|g| (0..n).map(|i| format!("g{}", i % g)).collect());
        Dataset::new(
            x,
            y,
            (0..p).map(|j| format!("f{j}")).collect(),
            group_ids,
            Family::Gaussian,
        )
        .unwrap()
    }

    #[test]
    fn unblocked_folds_are_balanced_and_reproducible() {
        let d = toy_dataset(10, 3, 1, None);
        let plan = make_folds(&d, 5, 7).unwrap();
        for f in 0..5 {
            assert_eq!(plan.test_rows(f).len(), 2);
        }
        let plan2 = make_folds(&d, 5, 7).unwrap();
        assert_eq!(plan.assignments, plan2.assignments);
    }

    #[test]
    fn blocked_folds_keep_groups_intact() {
        // 6 groups of unequal sizes
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 21;
        let sizes = [1usize, 2, 3, 4, 5, 6];
        let mut groups = Vec::new();
        for (g, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                groups.push(format!("g{g}"));
            }
        }
        let x = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let d = Dataset::new(
            x,
            y,
            vec!["a".into(), "b".into(), "c".into()],
            Some(groups.clone()),
            Family::Gaussian,
        )
        .unwrap();
        let plan = make_folds(&d, 3, 11).unwrap();
        for g in 0..6 {
            let rows: Vec<usize> = (0..n).filter(|&i| groups[i] == format!("g{g}")).collect();
            let fold = plan.assignments[rows[0]];
            assert!(rows.iter().all(|&i| plan.assignments[i] == fold));
        }
        // fewer groups than folds errors
        assert!(make_folds(&d, 7, 1).is_err());
    }

    #[test]
    fn leave_one_out_runs() {
        let d = toy_dataset(20, 4, 3, None);
        let w = crate::data::log_design(&d, false, false).unwrap();
        let plan = make_folds(&d, 20, 1).unwrap();
        let spec = PathSpec {
            n_lambda: 8,
            lambda_min_ratio: 0.05,
            rule: CvRule::Min,
        };
        let curve = cv_constrained_lasso(&w, &d.y, &plan, &spec, Family::Gaussian).unwrap();
        assert_eq!(curve.mean_error.len(), 8);
        assert!(curve.mean_error.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn pure_noise_one_se_rule_prefers_empty_model() {
        let mut empty = 0;
        for seed in 0..30 {
            let d = toy_dataset(40, 6, 100 + seed, None);
            let w = crate::data::log_design(&d, false, false).unwrap();
            let plan = make_folds(&d, 5, seed).unwrap();
            let spec = PathSpec {
                n_lambda: 12,
                lambda_min_ratio: 0.01,
                rule: CvRule::OneSe,
            };
            let curve = cv_constrained_lasso(&w, &d.y, &plan, &spec, Family::Gaussian).unwrap();
            // the sparsest grid point is gamma_max, where the model is empty
            if curve.chosen == 0 {
                empty += 1;
            }
        }
        assert!(empty >= 24, "one-se chose the empty model {empty}/30 times");
    }

    #[test]
    fn no_leakage_canary() {
        // feature 5 equals exp(y) on the rows of fold 0 and noise elsewhere;
        // leakage-free CV must not exploit it
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let mut x = Array2::from_shape_fn((n, 6), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let d0 = Dataset::new(
            x.clone(),
            y.clone(),
            (0..6).map(|j| format!("f{j}")).collect(),
            None,
            Family::Gaussian,
        )
        .unwrap();
        let plan = make_folds(&d0, 5, 9).unwrap();
        for &i in &plan.test_rows(0) {
            x[[i, 5]] = y[i].exp();
        }
        let d = Dataset::new(
            x,
            y.clone(),
            (0..6).map(|j| format!("f{j}")).collect(),
            None,
            Family::Gaussian,
        )
        .unwrap();
        let w = crate::data::log_design(&d, false, false).unwrap();
        let spec = PathSpec {
            n_lambda: 15,
            lambda_min_ratio: 0.01,
            rule: CvRule::Min,
        };
        let curve = cv_constrained_lasso(&w, &y, &plan, &spec, Family::Gaussian).unwrap();
        let var_y = {
            let m = y.sum() / n as f64;
            y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64
        };
        assert!(
            curve.mean_error[curve.chosen] >= 0.5 * var_y,
            "cv error {} suspiciously below the noise floor {}",
            curve.mean_error[curve.chosen],
            var_y
        );
    }

    #[test]
    fn two_stage_grid_shapes_and_degenerate_k() {
        let d = toy_dataset(30, 5, 6, None);
        let w = crate::data::log_design(&d, false, false).unwrap();
        let plan = make_folds(&d, 3, 2).unwrap();
        let full = LogDesign::from_log_matrix(w.w.clone(), true, false).unwrap();
        let gmax = solver::gamma_max(&full.w, &d.y, Family::Gaussian);
        let lambdas = [2.0 * gmax, gmax, 0.5 * gmax];
        // k_grid = {0} reduces to an intercept-only comparison
        let curve = cv_two_stage(
            &w,
            &d.y,
            &plan,
            &lambdas,
            &[0],
            Family::Gaussian,
            false,
            CvRule::Min,
        )
        .unwrap();
        assert_eq!(curve.grid.len(), 3);
        let e0 = curve.mean_error[0];
        assert!(curve.mean_error.iter().all(|e| (e - e0).abs() < 1e-12));
        // single-point grid returns that tuple
        let single = cv_two_stage(
            &w,
            &d.y,
            &plan,
            &[0.3 * gmax],
            &[2],
            Family::Gaussian,
            false,
            CvRule::Min,
        )
        .unwrap();
        assert_eq!(single.grid.len(), 1);
        assert_eq!(single.chosen, 0);
        assert_eq!(single.chosen_point().steps, Some(2));
    }

    #[test]
    fn warm_start_equivalence_on_path() {
        let d = toy_dataset(25, 5, 12, None);
        let w = crate::data::log_design(&d, true, false).unwrap();
        let path = solver::lambda_path(&w, &d.y, Family::Gaussian, 10, 0.01).unwrap();
        for (g, warm_sol) in &path {
            let cold = solver::constrained_lasso(&w, &d.y, *g, Family::Gaussian, None).unwrap();
            assert!(
                (cold.objective - warm_sol.objective).abs()
                    <= 1e-6 * (1.0 + warm_sol.objective.abs()),
                "objective mismatch at gamma = {g}"
            );
        }
    }

    #[test]
    fn binomial_two_stage_cv_runs() {
        // moderate amplitude and n large enough that the unpenalized stage-2
        // logistic refit does not run into separation
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let n = 120;
        let x = Array2::from_shape_fn((n, 5), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let w_raw = x.mapv(f64::ln);
        let eta: Array1<f64> = {
            let c0 = w_raw.column(0).to_owned();
            let c1 = w_raw.column(1).to_owned();
            (c0 - c1).mapv(|v| 1.2 * v)
        };
        let y = Array1::from_shape_fn(n, |i| {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            if rng.random::<f64>() < p { 1.0 } else { 0.0 }
        });
        let d = Dataset::new(
            x,
            y.clone(),
            (0..5).map(|j| format!("f{j}")).collect(),
            None,
            Family::Binomial,
        )
        .unwrap();
        let w = crate::data::log_design(&d, false, false).unwrap();
        let plan = make_folds(&d, 5, 4).unwrap();
        let full = LogDesign::from_log_matrix(w.w.clone(), true, false).unwrap();
        let gmax = solver::gamma_max(&full.w, &y, Family::Binomial);
        let lambdas = [gmax, 0.6 * gmax, 0.2 * gmax];
        let curve = cv_two_stage(
            &w,
            &y,
            &plan,
            &lambdas,
            &[0, 1, 2],
            Family::Binomial,
            false,
            CvRule::Min,
        )
        .unwrap();
        assert_eq!(curve.grid.len(), 9);
        assert!(curve.mean_error.iter().all(|e| e.is_finite()));
        let (theta, _) = fit_two_stage_at(&w, &y, curve.chosen_point(), Family::Binomial, false)
            .unwrap();
        assert!(theta.selected_pairs().contains(&(0, 1)));
    }

    #[test]
    fn binomial_degenerate_fold_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 12;
        let x = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal).exp());
        // a single positive case: some training split is bound to be constant
        let mut yv = vec![0.0; n];
        yv[0] = 1.0;
        let y = Array1::from_vec(yv);
        let d = Dataset::new(
            x,
            y.clone(),
            vec!["a".into(), "b".into(), "c".into()],
            None,
            Family::Binomial,
        )
        .unwrap();
        let w = crate::data::log_design(&d, false, false).unwrap();
        let plan = make_folds(&d, 3, 5).unwrap();
        let spec = PathSpec::default();
        assert!(matches!(
            cv_constrained_lasso(&w, &y, &plan, &spec, Family::Binomial),
            Err(Error::DegenerateFold(_))
        ));
    }
}

//! The pair/contrast coefficient embedding and the log-ratio lasso
//! estimators.
//!
//! A log-ratio model is parameterized either by pair coefficients `theta`
//! over ordered pairs `(j,k)`, `j < k`, or by a length-p contrast vector
//! `beta` whose entries sum to zero. The linear map between them is
//!
//! ```text
//!     b(theta)_k = sum_{j<k} -theta_{j,k} + sum_{j>k} theta_{k,j}
//! ```
//!
//! and is many-to-one; among all representatives of a given `beta`, the
//! minimal-L1 ones satisfy `2 ||theta||_1 = ||beta||_1`. Fitting is done in
//! contrast space (the sum-zero constrained lasso at penalty `gamma =
//! lambda / 2`), and the canonical `theta` is reconstructed by the bipartite
//! proportional rule `theta_{i,j} = 2 |beta_i| |beta_j| / ||beta||_1` over
//! (positive, negative) feature pairs.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{expand_ratios, Dataset, Family, LogDesign};
use crate::error::{Error, Result};
use crate::solver::{self, LassoSolution};
use crate::stepwise;

/// Sparse pair coefficients over ordered pairs `(j,k)`, `j < k` (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PairCoefficients {
    pairs: BTreeMap<(usize, usize), f64>,
    /// Number of raw features the pairs index into.
    pub p: usize,
    /// Intercept on the raw (uncentered) log scale.
    pub intercept: f64,
}

impl PairCoefficients {
    pub fn new(p: usize, intercept: f64) -> Self {
        PairCoefficients {
            pairs: BTreeMap::new(),
            p,
            intercept,
        }
    }

    /// Inserts a pair coefficient; zeros are dropped, keys must satisfy
    /// `j < k < p`.
    pub fn insert(&mut self, j: usize, k: usize, theta: f64) -> Result<()> {
        if j >= k {
            return Err(Error::InvalidArgument(format!(
                "pair ({j},{k}) must be ordered j < k"
            )));
        }
        if k >= self.p {
            return Err(Error::Index {
                index: k,
                p: self.p,
            });
        }
        if theta != 0.0 {
            self.pairs.insert((j, k), theta);
        }
        Ok(())
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.pairs.get(&(j, k)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.pairs.iter()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.pairs.values().map(|v| v.abs()).sum()
    }

    pub fn selected_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.keys().cloned().collect()
    }
}

/// Dense sum-zero contrast coefficients with intercept.
#[derive(Debug, Clone)]
pub struct ContrastCoefficients {
    pub beta: Array1<f64>,
    /// Intercept on the raw (uncentered) log scale.
    pub intercept: f64,
    /// `|sum_j beta_j|`, checked against the contrast tolerance.
    pub sum_residual: f64,
}

impl ContrastCoefficients {
    /// Validates the sum-zero condition within `1e-8 * (1 + ||beta||_1)`.
    pub fn new(beta: Array1<f64>, intercept: f64) -> Result<Self> {
        let sum: f64 = beta.sum();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let tol = 1e-8 * (1.0 + l1);
        if sum.abs() > tol {
            return Err(Error::NotAContrast {
                sum,
                tol,
            });
        }
        Ok(ContrastCoefficients {
            beta,
            intercept,
            sum_residual: sum.abs(),
        })
    }

    /// Builds without the sum-zero check. Used for ground-truth vectors that
    /// deliberately violate the contrast condition (misspecified models);
    /// `contrast_to_pairs` will still reject them.
    pub fn new_unchecked(beta: Array1<f64>, intercept: f64) -> Self {
        let sum: f64 = beta.sum();
        ContrastCoefficients {
            beta,
            intercept,
            sum_residual: sum.abs(),
        }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Applies the linear map `b`: collapses pair coefficients to the contrast
/// vector. The result sums to zero up to float roundoff by construction.
pub fn pairs_to_contrast(t: &PairCoefficients) -> ContrastCoefficients {
    let mut beta = Array1::zeros(t.p);
    for (&(j, k), &theta) in t.iter() {
        beta[j] += theta;
        beta[k] -= theta;
    }
    let sum: f64 = beta.sum();
    ContrastCoefficients {
        beta,
        intercept: t.intercept,
        sum_residual: sum.abs(),
    }
}

/// Reconstructs the canonical pair representative of a contrast vector:
/// `theta` over (positive, negative) feature pairs proportional to
/// `2 |beta_i| |beta_j| / ||beta||_1`, oriented so that `b(theta) = beta`.
/// Satisfies `2 ||theta||_1 = ||beta||_1` exactly up to roundoff.
pub fn contrast_to_pairs(c: &ContrastCoefficients) -> Result<PairCoefficients> {
    let l1: f64 = c.beta.iter().map(|b| b.abs()).sum();
    let tol = 1e-8 * (1.0 + l1);
    let sum: f64 = c.beta.sum();
    if sum.abs() > tol {
        return Err(Error::NotAContrast { sum, tol });
    }
    let mut out = PairCoefficients::new(c.p(), c.intercept);
    if l1 == 0.0 {
        return Ok(out);
    }
    let pos: Vec<usize> = (0..c.p()).filter(|&j| c.beta[j] > 0.0).collect();
    let neg: Vec<usize> = (0..c.p()).filter(|&j| c.beta[j] < 0.0).collect();
    for &i in &pos {
        for &j in &neg {
            let magnitude = 2.0 * c.beta[i].abs() * c.beta[j].abs() / l1;
            let (a, b, theta) = if i < j {
                (i, j, magnitude)
            } else {
                // canonical key orders the pair; the ratio flips sign
                (j, i, -magnitude)
            };
            out.insert(a, b, theta)?;
        }
    }
    Ok(out)
}

/// Fit diagnostics returned alongside estimated coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    /// Expanded-ratio penalty level (`lambda = 2 gamma`).
    pub lambda: f64,
    /// Constrained-lasso penalty actually used.
    pub gamma: f64,
    /// Stepwise pruning steps, for two-stage fits.
    pub k: Option<usize>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_residual: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fit degenerated (e.g. empty screening support).
    pub warning: Option<String>,
}

/// Single-stage log-ratio lasso at expanded-ratio penalty `lambda`, computed
/// through the constrained lasso at `gamma = lambda / 2`.
///
/// With `include_unpaired`, a zero log-column standing for the all-ones
/// feature is appended, so ratios against it act as plain log terms.
pub fn fit_single_stage(
    w: &LogDesign,
    y: &Array1<f64>,
    lambda: f64,
    family: Family,
    include_unpaired: bool,
) -> Result<(PairCoefficients, ContrastCoefficients, FitReport)> {
    let design = if include_unpaired {
        augment_log_design(w)
    } else {
        w.clone()
    };
    let gamma = lambda / 2.0;
    let sol = solver::constrained_lasso(&design, y, gamma, family, None)?;
    solution_to_model(&design, &sol, lambda, family, None, None)
}

/// Appends the zero log-column of an all-ones feature.
fn augment_log_design(w: &LogDesign) -> LogDesign {
    let (n, p) = (w.n(), w.p());
    let mut mat = Array2::zeros((n, p + 1));
    mat.slice_mut(ndarray::s![.., ..p]).assign(&w.w);
    let mut means = Array1::zeros(p + 1);
    means.slice_mut(ndarray::s![..p]).assign(&w.column_means);
    let mut sds = Array1::from_elem(p + 1, 0.0);
    sds.slice_mut(ndarray::s![..p]).assign(&w.column_sds);
    LogDesign {
        w: mat,
        column_means: means,
        column_sds: sds,
        centered: w.centered,
        scaled: w.scaled,
    }
}

fn solution_to_model(
    design: &LogDesign,
    sol: &LassoSolution,
    lambda: f64,
    family: Family,
    k: Option<usize>,
    warning: Option<String>,
) -> Result<(PairCoefficients, ContrastCoefficients, FitReport)> {
    // intercept back to the raw log scale
    let mut intercept = sol.intercept;
    if design.centered {
        for j in 0..design.p() {
            intercept -= sol.coefficients[j] * design.column_means[j];
        }
    }
    let contrast = ContrastCoefficients::new(sol.coefficients.clone(), intercept)?;
    let theta = contrast_to_pairs(&contrast)?;
    let report = FitReport {
        family,
        lambda,
        gamma: lambda / 2.0,
        k,
        objective: sol.objective,
        kkt_residual: sol.kkt_residual,
        constraint_residual: sol.constraint_residual,
        iterations: sol.iterations,
        converged: sol.converged,
        warning,
    };
    Ok((theta, contrast, report))
}

/// Two-stage log-ratio lasso: a single-stage fit at `lambda` screens the
/// feature support, then exact forward stepwise selects up to `k_max` ratio
/// columns among the screened pairs and refits them without penalty.
///
/// The conservative variant regresses the stage-one fitted values instead of
/// the observed response, retaining the stage-one shrinkage.
pub fn fit_two_stage(
    w: &LogDesign,
    y: &Array1<f64>,
    lambda: f64,
    k_max: usize,
    family: Family,
    conservative: bool,
) -> Result<(PairCoefficients, FitReport)> {
    let (_, contrast, stage1_report) = fit_single_stage(w, y, lambda, family, false)?;
    let support = contrast.support();
    two_stage_from_screen(w, y, &support, &contrast, stage1_report, k_max, family, conservative)
}

/// Stage two given an already-computed screening support. Exposed so that
/// cross-validation can reuse one stage-one path across many `k` values.
#[allow(clippy::too_many_arguments)]
pub(crate) fn two_stage_from_screen(
    w: &LogDesign,
    y: &Array1<f64>,
    support: &[usize],
    stage1: &ContrastCoefficients,
    stage1_report: FitReport,
    k_max: usize,
    family: Family,
    conservative: bool,
) -> Result<(PairCoefficients, FitReport)> {
    let lambda = stage1_report.lambda;
    if support.len() < 2 || k_max == 0 {
        let warning = if support.is_empty() && k_max > 0 {
            Some("empty stage-one support; returning intercept-only model".to_string())
        } else if support.len() == 1 && k_max > 0 {
            Some("singleton stage-one support admits no ratios; intercept-only model".to_string())
        } else {
            None
        };
        let mut report = stage1_report;
        report.k = Some(0);
        report.warning = warning;
        let n = y.len() as f64;
        let intercept = match family {
            Family::Gaussian => y.sum() / n,
            Family::Binomial => {
                let pbar = (y.sum() / n).clamp(1e-12, 1.0 - 1e-12);
                (pbar / (1.0 - pbar)).ln()
            }
        };
        return Ok((PairCoefficients::new(w.p(), intercept), report));
    }

    // Stage-two target: the observed response, or the stage-one linear
    // predictor for the conservative variant (which keeps its shrinkage).
    let target = if conservative {
        let mut shift = stage1.intercept;
        if w.centered {
            for j in 0..w.p() {
                shift += stage1.beta[j] * w.column_means[j];
            }
        }
        let mut eta = w.w.dot(&stage1.beta);
        eta.mapv_inplace(|v| v + shift);
        eta
    } else {
        y.clone()
    };

    let (z, pair_index) = expand_ratios(w, Some(support))?;
    let trace = stepwise::exact_forward_stepwise(&z, &pair_index, &target, k_max)?;
    let k = trace.selected.len();

    let mut theta = PairCoefficients::new(w.p(), 0.0);
    let mut intercept;
    if trace.selected.is_empty() {
        let n = y.len() as f64;
        intercept = match family {
            Family::Gaussian => y.sum() / n,
            Family::Binomial => {
                let pbar = (y.sum() / n).clamp(1e-12, 1.0 - 1e-12);
                (pbar / (1.0 - pbar)).ln()
            }
        };
    } else {
        // The trace already carries the least-squares refit on the target;
        // only the plain binomial fit re-estimates on y by unpenalized IRLS.
        let (sel, ls_coefs, ls_mu) = trace.model_at(k);
        let sel = sel.to_vec();
        let (coefs, mu): (Vec<f64>, f64) = match family {
            Family::Gaussian => (ls_coefs.to_vec(), ls_mu),
            Family::Binomial if conservative => (ls_coefs.to_vec(), ls_mu),
            Family::Binomial => {
                let mut zsel = Array2::zeros((y.len(), sel.len()));
                for (c, &(j, kk)) in sel.iter().enumerate() {
                    for i in 0..y.len() {
                        zsel[[i, c]] = w.w[[i, j]] - w.w[[i, kk]];
                    }
                }
                let prob =
                    solver::LassoProblem::unweighted(zsel, y.clone(), 0.0, Family::Binomial)?;
                let sol = solver::solve_lasso(&prob, None)?;
                (sol.coefficients.to_vec(), sol.intercept)
            }
        };
        intercept = mu;
        for (c, &(j, kk)) in sel.iter().enumerate() {
            theta.insert(j, kk, coefs[c])?;
            if w.centered {
                intercept -= coefs[c] * w.ratio_mean(j, kk);
            }
        }
    }
    theta.intercept = intercept;

    let report = FitReport {
        family,
        lambda,
        gamma: lambda / 2.0,
        k: Some(k),
        objective: f64::NAN,
        kkt_residual: f64::NAN,
        constraint_residual: None,
        iterations: stage1_report.iterations,
        converged: stage1_report.converged,
        warning: if trace.stopped_early {
            Some("stepwise stopped early".to_string())
        } else {
            None
        },
    };
    Ok((theta, report))
}

/// Evaluates the log-ratio model on raw positive data. Returns probabilities
/// through the logistic link for the binomial family.
///
/// Accepts a dataset with exactly `theta.p` features, or `theta.p - 1` when
/// the model was fitted with unpaired terms (the trailing all-ones feature is
/// then implicit).
pub fn predict(theta: &PairCoefficients, d: &Dataset) -> Result<Array1<f64>> {
    let implicit_ones = if d.p() == theta.p {
        false
    } else if d.p() + 1 == theta.p {
        true
    } else {
        return Err(Error::Dimension(format!(
            "model indexes {} features but dataset has {}",
            theta.p,
            d.p()
        )));
    };
    let n = d.n();
    let mut eta = Array1::from_elem(n, theta.intercept);
    for (&(j, k), &t) in theta.iter() {
        for i in 0..n {
            let xj = if implicit_ones && j == theta.p - 1 {
                1.0
            } else {
                d.x[[i, j]]
            };
            let xk = if implicit_ones && k == theta.p - 1 {
                1.0
            } else {
                d.x[[i, k]]
            };
            eta[i] += t * (xj / xk).ln();
        }
    }
    Ok(match d.family {
        Family::Gaussian => eta,
        Family::Binomial => eta.mapv(|e| 1.0 / (1.0 + (-e).exp())),
    })
}

/// Serialized model format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub p: usize,
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub pairs: Vec<PairJson>,
    pub family: Family,
    pub fit_meta: FitMeta,
}

/// One ratio term; indices are one-based in the serialized form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairJson {
    pub j: usize,
    pub k: usize,
    pub name_j: String,
    pub name_k: String,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    /// Expanded-ratio penalty; absent for penalty-free fits (stepwise).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl ModelJson {
    pub fn from_pairs(
        theta: &PairCoefficients,
        feature_names: &[String],
        family: Family,
        meta: FitMeta,
    ) -> Result<Self> {
        if feature_names.len() != theta.p {
            return Err(Error::Dimension(format!(
                "{} names for p = {}",
                feature_names.len(),
                theta.p
            )));
        }
        let pairs = theta
            .iter()
            .map(|(&(j, k), &t)| PairJson {
                j: j + 1,
                k: k + 1,
                name_j: feature_names[j].clone(),
                name_k: feature_names[k].clone(),
                theta: t,
            })
            .collect();
        Ok(ModelJson {
            p: theta.p,
            feature_names: feature_names.to_vec(),
            intercept: theta.intercept,
            pairs,
            family,
            fit_meta: meta,
        })
    }

    pub fn to_pairs(&self) -> Result<PairCoefficients> {
        let mut theta = PairCoefficients::new(self.p, self.intercept);
        for pair in &self.pairs {
            if pair.j == 0 || pair.k == 0 {
                return Err(Error::InvalidArgument(
                    "serialized pair indices are one-based".into(),
                ));
            }
            theta.insert(pair.j - 1, pair.k - 1, pair.theta)?;
        }
        Ok(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn pairs(p: usize, entries: &[(usize, usize, f64)]) -> PairCoefficients {
        let mut t = PairCoefficients::new(p, 0.0);
        for &(j, k, v) in entries {
            t.insert(j, k, v).unwrap();
        }
        t
    }

    #[test]
    fn empty_theta_maps_to_zero() {
        let t = PairCoefficients::new(4, 0.0);
        let c = pairs_to_contrast(&t);
        assert!(c.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn printed_example_maps_to_contrast() {
        // 2 log(x1/x3) + 1 log(x2/x4) -> beta = (2, 1, -2, -1)
        let t = pairs(4, &[(0, 2, 2.0), (1, 3, 1.0)]);
        let c = pairs_to_contrast(&t);
        assert_eq!(c.beta, array![2.0, 1.0, -2.0, -1.0]);
    }

    #[test]
    fn two_ratio_model_maps_to_contrast() {
        let s = 1.0;
        let t = pairs(4, &[(0, 1, 2.0 * s), (2, 3, s)]);
        let c = pairs_to_contrast(&t);
        assert_eq!(c.beta, array![2.0, -2.0, 1.0, -1.0]);
    }

    #[test]
    fn canonical_reconstruction_two_one() {
        let c = ContrastCoefficients::new(array![2.0, 1.0, -2.0, -1.0], 0.0).unwrap();
        let t = contrast_to_pairs(&c).unwrap();
        assert_abs_diff_eq!(t.get(0, 2), 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(0, 3), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(1, 2), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.get(1, 3), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.l1_norm(), 3.0, epsilon = 1e-12);
        // b(theta) = beta
        let back = pairs_to_contrast(&t);
        for j in 0..4 {
            assert_abs_diff_eq!(back.beta[j], c.beta[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn simple_two_feature_contrast() {
        let c = ContrastCoefficients::new(array![1.0, -1.0], 0.0).unwrap();
        let t = contrast_to_pairs(&c).unwrap();
        assert_eq!(t.len(), 1);
        assert_abs_diff_eq!(t.get(0, 1), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn nonzero_sum_is_rejected() {
        assert!(ContrastCoefficients::new(array![1.0, 1.0, -1.0], 0.0).is_err());
    }

    #[test]
    fn non_uniqueness_witnesses_share_image_and_norm() {
        // the three decompositions of beta = (2, 1, -2, -1)
        let a = pairs(4, &[(0, 2, 2.0), (1, 3, 1.0)]);
        let b = pairs(4, &[(0, 2, 1.5), (0, 3, 0.5), (1, 2, 0.5), (1, 3, 0.5)]);
        let c = pairs(4, &[(0, 2, 1.7), (0, 3, 0.3), (1, 2, 0.3), (1, 3, 0.7)]);
        for t in [&a, &b, &c] {
            let image = pairs_to_contrast(t);
            assert_eq!(image.beta, array![2.0, 1.0, -2.0, -1.0]);
            assert_abs_diff_eq!(t.l1_norm(), 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn predictions_scale_invariant_and_match_contrast() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_fn((10, 4), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let d = Dataset::new(
            x.clone(),
            Array1::zeros(10),
            (0..4).map(|j| format!("f{j}")).collect(),
            None,
            Family::Gaussian,
        )
        .unwrap();
        let t = pairs(4, &[(0, 2, 2.0), (1, 3, 1.0)]);
        let yhat = predict(&t, &d).unwrap();

        // fits agree with the contrast form mu + sum beta_j log x_j
        let c = pairs_to_contrast(&t);
        for i in 0..10 {
            let mut v = c.intercept;
            for j in 0..4 {
                v += c.beta[j] * d.x[[i, j]].ln();
            }
            assert_abs_diff_eq!(yhat[i], v, epsilon = 1e-10);
        }

        // row rescaling leaves predictions unchanged
        let mut scaled = d.clone();
        for j in 0..4 {
            scaled.x[[3, j]] *= 7.0;
        }
        let yhat2 = predict(&t, &scaled).unwrap();
        assert_abs_diff_eq!(yhat[3], yhat2[3], epsilon = 1e-10);
    }

    #[test]
    fn unit_ratio_prediction() {
        // x1 = e * x2 and theta = {(1,2): 1} with zero intercept predicts 1
        let x = array![[std::f64::consts::E, 1.0], [2.0 * std::f64::consts::E, 2.0]];
        let d = Dataset::new(
            x,
            array![0.0, 0.0],
            vec!["a".into(), "b".into()],
            None,
            Family::Gaussian,
        )
        .unwrap();
        let t = pairs(2, &[(0, 1, 1.0)]);
        let yhat = predict(&t, &d).unwrap();
        assert_abs_diff_eq!(yhat[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(yhat[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_accepts_implicit_ones_feature() {
        // model fitted with the unpaired augmentation indexes p + 1 features;
        // prediction on the raw p-feature dataset treats the last one as 1
        let x = array![[2.0, 3.0], [4.0, 5.0], [1.0, 7.0]];
        let d = Dataset::new(
            x.clone(),
            array![0.0, 0.0, 0.0],
            vec!["a".into(), "b".into()],
            None,
            Family::Gaussian,
        )
        .unwrap();
        let mut t = PairCoefficients::new(3, 0.5);
        t.insert(0, 2, 2.0).unwrap(); // 2 log(a / 1) = 2 log a
        let yhat = predict(&t, &d).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(yhat[i], 0.5 + 2.0 * x[[i, 0]].ln(), epsilon = 1e-12);
        }
        // augmented dataset gives the same numbers
        let aug = crate::data::augment_ones(&d).unwrap();
        let yhat2 = predict(&t, &aug).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(yhat[i], yhat2[i], epsilon = 1e-14);
        }
        // dimension mismatch is rejected
        let t_bad = PairCoefficients::new(5, 0.0);
        assert!(predict(&t_bad, &d).is_err());
    }

    #[test]
    fn single_stage_empty_at_large_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = Array2::from_shape_fn((30, 5), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let y = Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal));
        let d = Dataset::new(
            x,
            y.clone(),
            (0..5).map(|j| format!("f{j}")).collect(),
            None,
            Family::Gaussian,
        )
        .unwrap();
        let w = crate::data::log_design(&d, true, false).unwrap();
        let gmax = solver::gamma_max(&w.w, &y, Family::Gaussian);
        let (theta, contrast, report) =
            fit_single_stage(&w, &y, 2.0 * gmax * 1.01, Family::Gaussian, false).unwrap();
        assert!(theta.is_empty());
        assert!(contrast.beta.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(theta.intercept, y.sum() / 30.0, epsilon = 1e-8);
        assert!(report.converged);
    }

    #[test]
    fn two_stage_k_zero_is_intercept_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = Array2::from_shape_fn((30, 5), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let y = Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal));
        let d = Dataset::new(
            x,
            y.clone(),
            (0..5).map(|j| format!("f{j}")).collect(),
            None,
            Family::Gaussian,
        )
        .unwrap();
        let w = crate::data::log_design(&d, true, false).unwrap();
        let (theta, report) = fit_two_stage(&w, &y, 0.1, 0, Family::Gaussian, false).unwrap();
        assert!(theta.is_empty());
        assert_eq!(report.k, Some(0));
        assert_abs_diff_eq!(theta.intercept, y.sum() / 30.0, epsilon = 1e-12);
    }

    #[test]
    fn two_stage_empty_screen_warns() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = Array2::from_shape_fn((30, 5), |_| rng.sample::<f64, _>(StandardNormal).exp());
        let y = Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal));
        let d = Dataset::new(
            x,
            y.clone(),
            (0..5).map(|j| format!("f{j}")).collect(),
            None,
            Family::Gaussian,
        )
        .unwrap();
        let w = crate::data::log_design(&d, true, false).unwrap();
        let gmax = solver::gamma_max(&w.w, &y, Family::Gaussian);
        let (theta, report) =
            fit_two_stage(&w, &y, 2.0 * gmax * 1.01, 3, Family::Gaussian, false).unwrap();
        assert!(theta.is_empty());
        assert!(report.warning.is_some());
    }

    #[test]
    fn model_json_round_trip() {
        let t = pairs(4, &[(0, 2, 2.0), (1, 3, -1.0)]);
        let names: Vec<String> = (0..4).map(|j| format!("f{j}")).collect();
        let m = ModelJson::from_pairs(
            &t,
            &names,
            Family::Gaussian,
            FitMeta {
                lambda: Some(0.5),
                gamma: Some(0.25),
                k: Some(2),
            },
        )
        .unwrap();
        assert_eq!(m.pairs[0].j, 1);
        assert_eq!(m.pairs[0].k, 3);
        let s = serde_json::to_string(&m).unwrap();
        let back: ModelJson = serde_json::from_str(&s).unwrap();
        let t2 = back.to_pairs().unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn norm_lower_bound_under_null_space_perturbations() {
        // triangle cycles (i,j), (j,k), (i,k) span the null space of b:
        // adding t to the first two and subtracting it from the third leaves
        // the image unchanged, so every representative of beta costs at
        // least ||beta||_1 / 2
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let p = rng.random_range(4..10usize);
            let mut beta = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
            let mean = beta.sum() / p as f64;
            beta.mapv_inplace(|b| b - mean);
            let adj = beta.sum();
            beta[0] -= adj;
            let c = ContrastCoefficients::new(beta.clone(), 0.0).unwrap();
            let mut theta = contrast_to_pairs(&c).unwrap();
            let image_before = pairs_to_contrast(&theta);
            // random cycle perturbation
            let i = rng.random_range(0..p - 2);
            let j = rng.random_range(i + 1..p - 1);
            let k = rng.random_range(j + 1..p);
            let t: f64 = rng.sample(StandardNormal);
            theta.insert(i, j, theta.get(i, j) + t).unwrap();
            theta.insert(j, k, theta.get(j, k) + t).unwrap();
            theta.insert(i, k, theta.get(i, k) - t).unwrap();
            let image_after = pairs_to_contrast(&theta);
            for a in 0..p {
                assert_abs_diff_eq!(image_before.beta[a], image_after.beta[a], epsilon = 1e-10);
            }
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            assert!(
                2.0 * theta.l1_norm() >= l1 - 1e-10,
                "perturbed representative beat the lower bound"
            );
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_half_norm(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = rng.random_range(2..20usize);
            let mut beta = Array1::from_shape_fn(p, |_| rng.sample::<f64,_>(StandardNormal));
            let mean = beta.sum() / p as f64;
            beta.mapv_inplace(|b| b - mean); // exact-ish sum zero
            let adj = beta.sum();
            beta[0] -= adj;
            let c = ContrastCoefficients::new(beta.clone(), 0.0).unwrap();
            let t = contrast_to_pairs(&c).unwrap();
            let back = pairs_to_contrast(&t);
            for j in 0..p {
                prop_assert!((back.beta[j] - beta[j]).abs() <= 1e-10);
            }
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            prop_assert!((2.0 * t.l1_norm() - l1).abs() <= 1e-10 * (1.0 + l1));
        }

        #[test]
        fn image_sums_to_zero_and_norm_bound(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let p = rng.random_range(2..12usize);
            let mut t = PairCoefficients::new(p, 0.0);
            for _ in 0..rng.random_range(0..12usize) {
                let j = rng.random_range(0..p - 1);
                let k = rng.random_range(j + 1..p);
                t.insert(j, k, rng.sample::<f64,_>(StandardNormal)).unwrap();
            }
            let c = pairs_to_contrast(&t);
            let l1: f64 = c.beta.iter().map(|b| b.abs()).sum();
            prop_assert!(c.beta.sum().abs() <= 1e-10 * (1.0 + l1));
            // any representative has at least half the contrast norm
            prop_assert!(l1 <= 2.0 * t.l1_norm() + 1e-10);
        }
    }
}

//! Weighted L1 coordinate descent and the sum-zero constrained lasso.
//!
//! The Gaussian solver minimizes
//!
//! ```text
//!     (1/2) sum_i w_i (y_i - mu - x_i' beta)^2 + lambda ||beta||_1
//! ```
//!
//! with an unpenalized intercept, by cyclic coordinate descent with an
//! active-set strategy. The binomial solver wraps it in iteratively
//! reweighted least squares.
//!
//! The constrained lasso (sum of coefficients equal to zero) is solved on an
//! augmented design: one extra observation with every feature equal to one
//! and a weight comparable to the total data weight (two such rows with
//! responses one and zero for the binomial family). The intercept is
//! excluded from the augmented rows, so they restrict only the coefficient
//! sum. Rather than pushing the augmented weight towards infinity, the
//! augmented response is refined by a root find on the multiplier until the
//! coefficient sum is zero to tolerance, at which point the solution of the
//! augmented problem is exactly the solution of the constrained problem.

use ndarray::{Array1, Array2};

use crate::data::{Family, LogDesign};
use crate::error::{Error, Result};

/// Per-sweep relative coefficient-change tolerance.
pub const COEF_TOL: f64 = 1e-9;
/// KKT stationarity tolerance required for `converged = true`.
pub const KKT_TOL: f64 = 1e-7;
/// Hard cap on coordinate-descent sweeps per solve.
pub const MAX_SWEEPS: usize = 100_000;
/// Floor applied to IRLS variance weights.
pub const IRLS_WEIGHT_FLOOR: f64 = 1e-5;

/// Constraint-sum tolerance for a coefficient vector.
pub fn constraint_tol(beta: &Array1<f64>) -> f64 {
    1e-8 * beta.iter().map(|b| b.abs()).sum::<f64>() + 1e-12
}

/// A weighted L1-penalized regression problem.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    /// n x q design matrix.
    pub design: Array2<f64>,
    pub response: Array1<f64>,
    /// Strictly positive observation weights.
    pub weights: Array1<f64>,
    /// Penalty level (lambda, or gamma for constrained problems).
    pub lambda: f64,
    pub family: Family,
    /// The intercept is never penalized; set false to drop it entirely.
    pub fit_intercept: bool,
    /// Rows `[0, intercept_rows)` contribute to the intercept. Augmented
    /// constraint rows are appended past this boundary so they restrict only
    /// the coefficient sum.
    pub(crate) intercept_rows: usize,
}

impl LassoProblem {
    pub fn new(
        design: Array2<f64>,
        response: Array1<f64>,
        weights: Array1<f64>,
        lambda: f64,
        family: Family,
    ) -> Result<Self> {
        let n = design.nrows();
        if response.len() != n || weights.len() != n {
            return Err(Error::Dimension(format!(
                "design has {n} rows, response {} and weights {}",
                response.len(),
                weights.len()
            )));
        }
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        if design.iter().any(|v| !v.is_finite()) || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in design or response".into()));
        }
        if weights.iter().any(|&w| w.is_nan() || w <= 0.0 || !w.is_finite()) {
            return Err(Error::Domain("weights must be strictly positive".into()));
        }
        if family == Family::Binomial {
            for &v in response.iter() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Domain(
                        "binomial response must be 0/1".into(),
                    ));
                }
            }
        }
        Ok(LassoProblem {
            design,
            response,
            weights,
            lambda,
            family,
            fit_intercept: true,
            intercept_rows: n,
        })
    }

    /// Unit-weight convenience constructor.
    pub fn unweighted(
        design: Array2<f64>,
        response: Array1<f64>,
        lambda: f64,
        family: Family,
    ) -> Result<Self> {
        let n = design.nrows();
        LassoProblem::new(design, response, Array1::from_elem(n, 1.0), lambda, family)
    }

    /// Drops the intercept (used by the selection-event lasso, whose
    /// polyhedron formulas assume no intercept).
    pub fn without_intercept(mut self) -> Self {
        self.fit_intercept = false;
        self
    }
}

/// Solution of a lasso problem.
#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|sum beta|` for constrained fits, `None` otherwise.
    pub constraint_residual: Option<f64>,
}

impl LassoSolution {
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Solver tolerances. The defaults implement the documented convergence
/// policy; the selection-event path tightens them.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub coef_tol: f64,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            coef_tol: COEF_TOL,
            kkt_tol: KKT_TOL,
            max_sweeps: MAX_SWEEPS,
        }
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Internal state for the Gaussian coordinate-descent core.
struct CdState {
    beta: Vec<f64>,
    mu: f64,
    residual: Vec<f64>,
    sweeps: usize,
}

/// Cyclic coordinate descent for the weighted Gaussian lasso.
///
/// `cols` is the design in column-major slices; `intercept_rows` bounds the
/// rows that see the intercept. Returns the converged flag.
#[allow(clippy::too_many_arguments)]
fn cd_gaussian(
    cols: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    lambda: f64,
    fit_intercept: bool,
    intercept_rows: usize,
    state: &mut CdState,
    opts: &SolverOptions,
) -> bool {
    let n = y.len();
    let q = cols.len();
    let col_sq: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().zip(w).map(|(x, wi)| wi * x * x).sum())
        .collect();
    let w_int: f64 = w[..intercept_rows].iter().sum();

    // rebuild the residual from the current state
    let mut r: Vec<f64> = (0..n)
        .map(|i| y[i] - if i < intercept_rows { state.mu } else { 0.0 })
        .collect();
    for (j, col) in cols.iter().enumerate() {
        let b = state.beta[j];
        if b != 0.0 {
            for i in 0..n {
                r[i] -= col[i] * b;
            }
        }
    }

    let update_intercept = |mu: &mut f64, r: &mut [f64]| {
        if !fit_intercept || w_int <= 0.0 {
            return 0.0;
        }
        let delta: f64 = r[..intercept_rows]
            .iter()
            .zip(w)
            .map(|(ri, wi)| wi * ri)
            .sum::<f64>()
            / w_int;
        *mu += delta;
        for ri in r[..intercept_rows].iter_mut() {
            *ri -= delta;
        }
        delta
    };
    update_intercept(&mut state.mu, &mut r);

    let sweep = |beta: &mut [f64], mu: &mut f64, r: &mut [f64], active_only: bool| -> f64 {
        let mut max_change: f64 = 0.0;
        for j in 0..q {
            if col_sq[j] <= 0.0 || (active_only && beta[j] == 0.0) {
                continue;
            }
            let col = &cols[j];
            let mut num: f64 = 0.0;
            for i in 0..n {
                num += w[i] * col[i] * r[i];
            }
            num += beta[j] * col_sq[j];
            let new = soft_threshold(num, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for i in 0..n {
                    r[i] -= col[i] * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change = max_change.max(update_intercept(mu, r).abs());
        max_change
    };

    #[cfg(debug_assertions)]
    let objective = |beta: &[f64], r: &[f64]| -> f64 {
        0.5 * r.iter().zip(w).map(|(ri, wi)| wi * ri * ri).sum::<f64>()
            + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    #[cfg(debug_assertions)]
    let mut prev_obj = objective(&state.beta, &r);

    let kkt = |beta: &[f64], r: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..q {
            if col_sq[j] <= 0.0 {
                continue;
            }
            let c: f64 = cols[j]
                .iter()
                .zip(w)
                .zip(r.iter())
                .map(|((x, wi), ri)| wi * x * ri)
                .sum();
            let v = if beta[j] != 0.0 {
                (c - lambda * beta[j].signum()).abs()
            } else {
                (c.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        if fit_intercept && w_int > 0.0 {
            let c: f64 = r[..intercept_rows]
                .iter()
                .zip(w)
                .map(|(ri, wi)| wi * ri)
                .sum();
            worst = worst.max(c.abs());
        }
        worst
    };

    let mut converged = false;
    while state.sweeps < opts.max_sweeps {
        let change = sweep(&mut state.beta, &mut state.mu, &mut r, false);
        state.sweeps += 1;

        #[cfg(debug_assertions)]
        {
            let obj = objective(&state.beta, &r);
            debug_assert!(
                obj <= prev_obj + 1e-10 * (1.0 + prev_obj.abs()),
                "coordinate descent objective increased: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }

        let max_beta = state.beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if change <= opts.coef_tol * (1.0 + max_beta) {
            if kkt(&state.beta, &r) <= opts.kkt_tol {
                converged = true;
                break;
            }
        } else {
            // iterate on the active set until it stabilizes, then re-verify
            // with a full sweep
            while state.sweeps < opts.max_sweeps {
                let c = sweep(&mut state.beta, &mut state.mu, &mut r, true);
                state.sweeps += 1;
                let mb = state.beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
                if c <= opts.coef_tol * (1.0 + mb) {
                    break;
                }
            }
        }
    }
    state.residual = r;
    converged
}

fn to_columns(x: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).to_vec()).collect()
}

fn gaussian_objective(
    x: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
    lambda: f64,
    beta: &Array1<f64>,
    mu: f64,
) -> f64 {
    let fitted = x.dot(beta);
    let rss: f64 = (0..y.len())
        .map(|i| {
            let r = y[i] - mu - fitted[i];
            w[i] * r * r
        })
        .sum();
    0.5 * rss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn binomial_objective(
    x: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
    lambda: f64,
    beta: &Array1<f64>,
    mu: f64,
) -> f64 {
    let eta = x.dot(beta);
    let nll: f64 = (0..y.len())
        .map(|i| {
            let e = mu + eta[i];
            w[i] * (log1p_exp(e) - y[i] * e)
        })
        .sum();
    nll + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// log(1 + exp(x)) without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Solves a lasso problem, warm-started from `init` when given.
pub fn solve_lasso(prob: &LassoProblem, init: Option<&LassoSolution>) -> Result<LassoSolution> {
    solve_lasso_with(prob, init, &SolverOptions::default())
}

pub fn solve_lasso_with(
    prob: &LassoProblem,
    init: Option<&LassoSolution>,
    opts: &SolverOptions,
) -> Result<LassoSolution> {
    let q = prob.design.ncols();
    let mut state = CdState {
        beta: init
            .map(|s| s.coefficients.to_vec())
            .unwrap_or_else(|| vec![0.0; q]),
        // a warm intercept is meaningless (and never updated) without one
        mu: if prob.fit_intercept {
            init.map(|s| s.intercept).unwrap_or(0.0)
        } else {
            0.0
        },
        residual: Vec::new(),
        sweeps: 0,
    };
    if state.beta.len() != q {
        return Err(Error::Dimension(format!(
            "warm start has {} coefficients for a {q}-column design",
            state.beta.len()
        )));
    }
    let cols = to_columns(&prob.design);
    let y = prob.response.as_slice().unwrap().to_vec();
    let w = prob.weights.as_slice().unwrap().to_vec();

    let converged = match prob.family {
        Family::Gaussian => cd_gaussian(
            &cols,
            &y,
            &w,
            prob.lambda,
            prob.fit_intercept,
            prob.intercept_rows,
            &mut state,
            opts,
        ),
        Family::Binomial => irls_binomial(&cols, &y, &w, prob, &mut state, opts)?,
    };

    let beta = Array1::from_vec(state.beta);
    let objective = match prob.family {
        Family::Gaussian => gaussian_objective(
            &prob.design,
            &prob.response,
            &prob.weights,
            prob.lambda,
            &beta,
            state.mu,
        ),
        Family::Binomial => binomial_objective(
            &prob.design,
            &prob.response,
            &prob.weights,
            prob.lambda,
            &beta,
            state.mu,
        ),
    };
    let sol = LassoSolution {
        coefficients: beta,
        intercept: if prob.fit_intercept { state.mu } else { 0.0 },
        objective,
        kkt_residual: f64::NAN,
        iterations: state.sweeps,
        converged,
        constraint_residual: None,
    };
    let kkt = kkt_check(prob, &sol);
    Ok(LassoSolution {
        kkt_residual: kkt,
        ..sol
    })
}

/// IRLS outer loop for the binomial family. The working response for the
/// augmented constraint rows uses the row's own (possibly non-binary)
/// response, which is how the multiplier tilt enters.
///
/// At an IRLS fixed point the variance weights cancel out of the working
/// residual, so the stationarity conditions of the true penalized likelihood
/// hold there regardless of the weight floor; the loop therefore iterates
/// until the true KKT residual clears the tolerance.
fn irls_binomial(
    cols: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    prob: &LassoProblem,
    state: &mut CdState,
    opts: &SolverOptions,
) -> Result<bool> {
    let n = y.len();
    let q = cols.len();
    let max_outer = 200;
    let mut converged = false;
    let linear_predictor = |beta: &[f64], mu: f64| -> Vec<f64> {
        let mut eta: Vec<f64> = (0..n)
            .map(|i| {
                if i < prob.intercept_rows && prob.fit_intercept {
                    mu
                } else {
                    0.0
                }
            })
            .collect();
        for (j, col) in cols.iter().enumerate() {
            if beta[j] != 0.0 {
                for i in 0..n {
                    eta[i] += col[i] * beta[j];
                }
            }
        }
        eta
    };
    let true_kkt = |beta: &[f64], eta: &[f64]| -> f64 {
        let score: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - sigmoid(eta[i]))).collect();
        let mut worst: f64 = 0.0;
        for j in 0..q {
            let c: f64 = cols[j].iter().zip(&score).map(|(x, s)| x * s).sum();
            let v = if beta[j] != 0.0 {
                (c - prob.lambda * beta[j].signum()).abs()
            } else {
                (c.abs() - prob.lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        if prob.fit_intercept {
            let c: f64 = score[..prob.intercept_rows].iter().sum();
            worst = worst.max(c.abs());
        }
        worst
    };
    for _ in 0..max_outer {
        let eta = linear_predictor(&state.beta, state.mu);
        let mut z = vec![0.0; n];
        let mut wv = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(eta[i]);
            let v = (p * (1.0 - p)).max(IRLS_WEIGHT_FLOOR);
            z[i] = eta[i] + (y[i] - p) / v;
            wv[i] = w[i] * v;
        }
        let beta_old = state.beta.clone();
        let mu_old = state.mu;
        let inner_opts = SolverOptions {
            kkt_tol: 0.5 * opts.kkt_tol,
            ..*opts
        };
        let mut inner = CdState {
            beta: state.beta.clone(),
            mu: state.mu,
            residual: Vec::new(),
            sweeps: 0,
        };
        cd_gaussian(
            cols,
            &z,
            &wv,
            prob.lambda,
            prob.fit_intercept,
            prob.intercept_rows,
            &mut inner,
            &inner_opts,
        );
        state.beta = inner.beta;
        state.mu = inner.mu;
        state.sweeps += inner.sweeps;
        if state.sweeps >= opts.max_sweeps {
            break;
        }
        let mut change = (state.mu - mu_old).abs();
        for (new, old) in state.beta.iter().zip(&beta_old) {
            change = change.max((new - old).abs());
        }
        let max_beta = state.beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if change <= 1e-8 * (1.0 + max_beta) {
            let eta_new = linear_predictor(&state.beta, state.mu);
            if true_kkt(&state.beta, &eta_new) <= opts.kkt_tol {
                converged = true;
                break;
            }
        }
    }
    Ok(converged)
}

/// Maximum KKT stationarity violation of `sol` for `prob`.
///
/// Active coordinates contribute `|x_j' r - lambda sign(beta_j)|`, inactive
/// ones `max(0, |x_j' r| - lambda)`, with `r` the weighted residual (working
/// residual for the binomial family). The unpenalized intercept contributes
/// its own gradient when fitted.
pub fn kkt_check(prob: &LassoProblem, sol: &LassoSolution) -> f64 {
    let n = prob.design.nrows();
    let q = prob.design.ncols();
    let mut r = vec![0.0; n];
    let fitted = prob.design.dot(&sol.coefficients);
    for i in 0..n {
        let eta = fitted[i]
            + if i < prob.intercept_rows && prob.fit_intercept {
                sol.intercept
            } else {
                0.0
            };
        r[i] = match prob.family {
            Family::Gaussian => prob.weights[i] * (prob.response[i] - eta),
            Family::Binomial => prob.weights[i] * (prob.response[i] - sigmoid(eta)),
        };
    }
    let mut worst: f64 = 0.0;
    for j in 0..q {
        let col = prob.design.column(j);
        let zero_col = col.iter().all(|&v| v == 0.0);
        if zero_col {
            continue;
        }
        let c: f64 = col.iter().zip(&r).map(|(x, ri)| x * ri).sum();
        let v = if sol.coefficients[j] != 0.0 {
            (c - prob.lambda * sol.coefficients[j].signum()).abs()
        } else {
            (c.abs() - prob.lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    if prob.fit_intercept {
        let c: f64 = r[..prob.intercept_rows].iter().sum();
        worst = worst.max(c.abs());
    }
    worst
}

/// KKT violation for a sum-zero constrained solution, profiling out the
/// scalar multiplier of the constraint: minimizes over `nu` the maximum of
/// `|x_j' r - nu - gamma sign(beta_j)|` (active) and
/// `max(0, |x_j' r - nu| - gamma)` (inactive).
pub fn kkt_check_constrained(
    w_mat: &Array2<f64>,
    y: &Array1<f64>,
    gamma: f64,
    family: Family,
    sol: &LassoSolution,
) -> f64 {
    let n = w_mat.nrows();
    let q = w_mat.ncols();
    let fitted = w_mat.dot(&sol.coefficients);
    let r: Vec<f64> = (0..n)
        .map(|i| match family {
            Family::Gaussian => y[i] - sol.intercept - fitted[i],
            Family::Binomial => y[i] - sigmoid(sol.intercept + fitted[i]),
        })
        .collect();
    let c: Vec<f64> = (0..q)
        .map(|j| w_mat.column(j).iter().zip(&r).map(|(x, ri)| x * ri).sum())
        .collect();
    let viol = |nu: f64| -> f64 {
        let mut worst: f64 = 0.0;
        for (cj, bj) in c.iter().zip(sol.coefficients.iter()) {
            let v = if *bj != 0.0 {
                (cj - nu - gamma * bj.signum()).abs()
            } else {
                ((cj - nu).abs() - gamma).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    };
    // the max of convex piecewise-linear functions is convex in nu
    let mut lo = c.iter().cloned().fold(f64::INFINITY, f64::min) - gamma - 1.0;
    let mut hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + gamma + 1.0;
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if viol(m1) <= viol(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    viol(0.5 * (lo + hi))
}

/// Smallest penalty with an all-zero solution, computed from the augmented
/// design (whose constraint row contributes nothing at beta = 0).
pub fn gamma_max(w_mat: &Array2<f64>, y: &Array1<f64>, family: Family) -> f64 {
    let n = w_mat.nrows();
    let base: Vec<f64> = match family {
        Family::Gaussian => {
            let ybar = y.sum() / n as f64;
            y.iter().map(|yi| yi - ybar).collect()
        }
        Family::Binomial => {
            let pbar = y.sum() / n as f64;
            y.iter().map(|yi| yi - pbar).collect()
        }
    };
    (0..w_mat.ncols())
        .map(|j| {
            w_mat
                .column(j)
                .iter()
                .zip(&base)
                .map(|(x, b)| x * b)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Solves the sum-zero constrained lasso
///
/// ```text
///     min_{beta: sum_j beta_j = 0} (1/2) sum_i (y_i - mu - w_i' beta)^2
///                                  + gamma ||beta||_1
/// ```
///
/// (weighted negative log-likelihood for the binomial family) on a centered,
/// unscaled log design.
pub fn constrained_lasso(
    w: &LogDesign,
    y: &Array1<f64>,
    gamma: f64,
    family: Family,
    init: Option<&LassoSolution>,
) -> Result<LassoSolution> {
    if !w.centered || w.scaled {
        return Err(Error::InvalidArgument(
            "constrained lasso requires a centered, unscaled log design".into(),
        ));
    }
    let n = w.n();
    let p = w.p();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "response length {} != n = {n}",
            y.len()
        )));
    }
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }

    let n_aug = match family {
        Family::Gaussian => 1,
        Family::Binomial => 2,
    };
    let mut design = Array2::zeros((n + n_aug, p));
    design.slice_mut(ndarray::s![..n, ..]).assign(&w.w);
    for r in 0..n_aug {
        design.row_mut(n + r).fill(1.0);
    }

    let sum_w = n as f64;
    let mut aug_weight = sum_w;
    let mut state: Option<LassoSolution> = init.cloned();
    let mut last_residual = f64::INFINITY;

    for escalation in 0..3 {
        match refine_multiplier(&design, y, gamma, family, aug_weight, n, state.as_ref())? {
            RefineOutcome::Converged(sol) => {
                return finish_constrained(w, y, gamma, family, sol);
            }
            RefineOutcome::Stalled(sol, residual) => {
                last_residual = residual;
                state = Some(sol);
                if escalation < 2 {
                    aug_weight *= 100.0;
                }
            }
        }
    }
    Err(Error::NonConvergence(format!(
        "constraint residual {last_residual:.3e} after augmented-weight escalation"
    )))
}

enum RefineOutcome {
    Converged(LassoSolution),
    Stalled(LassoSolution, f64),
}

/// Root-find on the augmented-row response so that the coefficient sum hits
/// zero. The map from response to coefficient sum is monotone increasing and
/// piecewise linear, so a bracketing secant (Illinois) iteration converges
/// quickly; every evaluation is a warm-started solve.
fn refine_multiplier(
    design: &Array2<f64>,
    y: &Array1<f64>,
    gamma: f64,
    family: Family,
    aug_weight: f64,
    n: usize,
    init: Option<&LassoSolution>,
) -> Result<RefineOutcome> {
    let n_aug = design.nrows() - n;
    let mut warm = init.cloned();

    let eval = |tilt: f64, warm: &mut Option<LassoSolution>| -> Result<(f64, LassoSolution)> {
        let mut response = Array1::zeros(n + n_aug);
        response.slice_mut(ndarray::s![..n]).assign(y);
        match family {
            Family::Gaussian => response[n] = tilt,
            Family::Binomial => {
                response[n] = 1.0 + tilt;
                response[n + 1] = tilt;
            }
        }
        let mut weights = Array1::from_elem(n + n_aug, 1.0);
        for r in 0..n_aug {
            weights[n + r] = aug_weight;
        }
        let prob = LassoProblem {
            design: design.clone(),
            response,
            weights,
            lambda: gamma,
            family,
            fit_intercept: true,
            intercept_rows: n,
        };
        let sol = solve_lasso_with(&prob, warm.as_ref(), &SolverOptions::default())?;
        let sum = sol.coefficients.sum();
        *warm = Some(sol.clone());
        Ok((sum, sol))
    };

    let (mut f0, mut sol0) = eval(0.0, &mut warm)?;
    let tol = |s: &LassoSolution| constraint_tol(&s.coefficients);
    if f0.abs() <= tol(&sol0) {
        return Ok(RefineOutcome::Converged(sol0));
    }

    // bracket the root by stepping against the sign of the sum
    let mut t0 = 0.0;
    let mut step = -f0.signum() * (f0.abs().max(1e-8));
    let mut t1 = t0 + step;
    let (mut f1, mut sol1) = eval(t1, &mut warm)?;
    let mut tries = 0;
    while f0.signum() == f1.signum() && tries < 80 {
        if f1.abs() <= tol(&sol1) {
            return Ok(RefineOutcome::Converged(sol1));
        }
        t0 = t1;
        f0 = f1;
        sol0 = sol1;
        step *= 4.0;
        t1 = t0 + step;
        let r = eval(t1, &mut warm)?;
        f1 = r.0;
        sol1 = r.1;
        tries += 1;
    }
    if f0.abs() <= tol(&sol0) {
        return Ok(RefineOutcome::Converged(sol0));
    }
    if f1.abs() <= tol(&sol1) {
        return Ok(RefineOutcome::Converged(sol1));
    }
    if f0.signum() == f1.signum() {
        return Ok(RefineOutcome::Stalled(sol1, f1.abs()));
    }

    // Illinois regula falsi on the bracket
    let mut side = 0i32;
    for _ in 0..200 {
        let t = (t0 * f1 - t1 * f0) / (f1 - f0);
        let (ft, sol_t) = eval(t, &mut warm)?;
        if ft.abs() <= tol(&sol_t) {
            return Ok(RefineOutcome::Converged(sol_t));
        }
        if ft.signum() == f0.signum() {
            t0 = t;
            f0 = ft;
            if side == -1 {
                f1 *= 0.5;
            }
            side = -1;
        } else {
            t1 = t;
            f1 = ft;
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        }
        sol1 = sol_t;
    }
    let residual = sol1.coefficients.sum().abs();
    Ok(RefineOutcome::Stalled(sol1, residual))
}

/// Applies the exact active-set projection when it is objective-neutral and
/// fills in the reported diagnostics for a constrained solution.
fn finish_constrained(
    w: &LogDesign,
    y: &Array1<f64>,
    gamma: f64,
    family: Family,
    mut sol: LassoSolution,
) -> Result<LassoSolution> {
    let obj = |beta: &Array1<f64>, mu: f64| match family {
        Family::Gaussian => gaussian_objective(
            &w.w,
            y,
            &Array1::from_elem(y.len(), 1.0),
            gamma,
            beta,
            mu,
        ),
        Family::Binomial => binomial_objective(
            &w.w,
            y,
            &Array1::from_elem(y.len(), 1.0),
            gamma,
            beta,
            mu,
        ),
    };
    let objective_before = obj(&sol.coefficients, sol.intercept);

    let sum: f64 = sol.coefficients.sum();
    let active: Vec<usize> = sol.support();
    if !active.is_empty() && sum != 0.0 {
        let mut projected = sol.coefficients.clone();
        let shift = sum / active.len() as f64;
        for &j in &active {
            projected[j] -= shift;
        }
        let objective_after = obj(&projected, sol.intercept);
        if (objective_after - objective_before).abs() < 1e-9 * (1.0 + objective_before.abs()) {
            sol.coefficients = projected;
        }
    }

    let final_sum = sol.coefficients.sum().abs();
    let tol = constraint_tol(&sol.coefficients);
    if final_sum > tol {
        return Err(Error::NonConvergence(format!(
            "constraint residual {final_sum:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    sol.constraint_residual = Some(final_sum);
    sol.objective = obj(&sol.coefficients, sol.intercept);
    sol.kkt_residual = kkt_check_constrained(&w.w, y, gamma, family, &sol);
    Ok(sol)
}

/// Geometric penalty path from `gamma_max` down, each point warm-started
/// from the previous one.
pub fn lambda_path(
    w: &LogDesign,
    y: &Array1<f64>,
    family: Family,
    n_lambda: usize,
    lambda_min_ratio: f64,
) -> Result<Vec<(f64, LassoSolution)>> {
    if n_lambda < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 path points, got {n_lambda}"
        )));
    }
    if lambda_min_ratio.is_nan() || lambda_min_ratio <= 0.0 || lambda_min_ratio >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda_min_ratio must lie in (0,1), got {lambda_min_ratio}"
        )));
    }
    let gmax = gamma_max(&w.w, y, family).max(1e-300);
    let ratio = lambda_min_ratio.powf(1.0 / (n_lambda as f64 - 1.0));
    let mut out = Vec::with_capacity(n_lambda);
    let mut warm: Option<LassoSolution> = None;
    let mut g = gmax;
    for _ in 0..n_lambda {
        let sol = constrained_lasso(w, y, g, family, warm.as_ref())?;
        warm = Some(sol.clone());
        out.push((g, sol));
        g *= ratio;
    }
    Ok(out)
}

//! Goodness-of-fit tests for the log-ratio hypothesis.
//!
//! A linear model in the log features corresponds to a log-ratio model if
//! and only if its coefficients sum to zero. Two tests of that hypothesis
//! are provided:
//!
//! * [`f_test_sum_zero`]: the classical F-test of the linear restriction on
//!   the full OLS fit (requires `n > p + 1` and a full-rank design);
//! * [`selective_sum_zero_test`]: a post-selective test that conditions on
//!   the support and signs selected by the lasso. The selection event is a
//!   polyhedron `{A y <= b}`; conditional on it, the statistic `eta' y` with
//!   `eta = X_M (X_M' X_M)^{-1} 1` follows a Gaussian truncated to an
//!   interval `[V-, V+]` computable from the event, which yields an exact
//!   pivot under the null that the selected-model coefficients sum to zero.
//!
//! The reported one-sided p-value is small when the evidence points to a
//! positive coefficient sum (the pivot is monotone decreasing in the mean
//! parameter), and the two-sided value is `1 - 2 |p - 1/2|`.

use ndarray::{Array1, Array2};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::erf::erfc;

use crate::data::{Family, LogDesign};
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{self, LassoProblem, SolverOptions};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    0.5 * erfc(x / SQRT_2)
}

/// CDF at `x` of a `N(mu, sd^2)` random variable truncated to `[lo, hi]`.
///
/// When the whole interval sits in one tail the computation switches to the
/// complementary tail so the numerator and denominator are formed from small
/// same-sign quantities instead of catastrophic cancellations near one.
pub fn truncated_gaussian_cdf(x: f64, mu: f64, sd: f64, lo: f64, hi: f64) -> Result<f64> {
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "truncation sd must be positive, got {sd}"
        )));
    }
    if hi < lo {
        return Err(Error::InvalidArgument(format!(
            "empty truncation interval [{lo}, {hi}]"
        )));
    }
    if x < lo || x > hi {
        return Err(Error::InvalidArgument(format!(
            "point {x} outside truncation interval [{lo}, {hi}]"
        )));
    }
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let u = (x - mu) / sd;
    let (num, den) = if a >= 0.0 {
        // upper tail: work with survival functions
        (normal_sf(a) - normal_sf(u), normal_sf(a) - normal_sf(b))
    } else {
        // lower tail and straddling cases: plain CDFs (computed through the
        // lower-tail erfc) are the stable form
        (normal_cdf(u) - normal_cdf(a), normal_cdf(b) - normal_cdf(a))
    };
    if den.is_nan() || den <= 0.0 || !den.is_finite() {
        return Err(Error::UnstableTruncation);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Classical F-test of the sum-zero hypothesis on the full OLS fit of `y`
/// against an intercept plus all log features. Returns `(F, p)`.
pub fn f_test_sum_zero(w: &LogDesign, y: &Array1<f64>) -> Result<(f64, f64)> {
    let n = w.n();
    let p = w.p();
    if n <= p + 1 {
        return Err(Error::RankDeficient(format!(
            "F-test needs n > p + 1 (n = {n}, p = {p}); use the selective test"
        )));
    }
    let mut design = Array2::ones((n, p + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&w.w);
    let gram = design.t().dot(&design);
    let xty = design.t().dot(y);
    let coef = linalg::solve(&gram, &xty).map_err(|_| {
        Error::RankDeficient("log-feature design is rank deficient; use the selective test".into())
    })?;
    let fitted = design.dot(&coef);
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    let df = (n - p - 1) as f64;
    let sigma2 = rss / df;

    // contrast (0, 1, ..., 1) over (intercept, beta)
    let mut a = Array1::ones(p + 1);
    a[0] = 0.0;
    let u = linalg::solve(&gram, &a).map_err(|_| {
        Error::RankDeficient("log-feature design is rank deficient; use the selective test".into())
    })?;
    let quad = a.dot(&u);
    let sum_beta: f64 = coef.iter().skip(1).sum();
    let num = sum_beta * sum_beta;

    let coef_scale: f64 = coef.iter().map(|c| c.abs()).sum::<f64>() + 1.0;
    let y_scale: f64 = y.dot(y) + 1e-300;
    if rss <= 1e-20 * y_scale {
        // noiseless fit: the hypothesis either holds exactly or is violated
        return if sum_beta.abs() <= 1e-10 * coef_scale {
            Ok((0.0, 1.0))
        } else {
            Ok((f64::INFINITY, 0.0))
        };
    }
    let f_stat = num / (sigma2 * quad);
    let dist =
        FisherSnedecor::new(1.0, df).map_err(|e| Error::Domain(format!("F distribution: {e}")))?;
    let p_value = dist.sf(f_stat).clamp(0.0, 1.0);
    Ok((f_stat, p_value))
}

/// The lasso selection event `{M-hat = M, s-hat = s}` as a polyhedron
/// `{A y <= b}`.
#[derive(Debug, Clone)]
pub struct SelectionEvent {
    /// Selected support, ascending.
    pub support: Vec<usize>,
    /// Signs of the selected coefficients.
    pub signs: Vec<f64>,
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    /// Penalty at which the event was generated.
    pub lambda: f64,
}

impl SelectionEvent {
    /// Largest violation of `A y <= b` (negative when strictly inside).
    pub fn max_slack(&self, y: &Array1<f64>) -> f64 {
        let ay = self.a.dot(y);
        ay.iter()
            .zip(self.b.iter())
            .map(|(l, r)| l - r)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs the (no-intercept) lasso at `lambda` on `x_design` and builds the
/// polyhedral representation of the realized selection event: two dual
/// feasibility blocks for the inactive features and one sign block for the
/// active ones. Errors if the constructed polyhedron fails to contain `y`.
pub fn lasso_selection_event(
    x_design: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
) -> Result<SelectionEvent> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "selection event needs lambda > 0, got {lambda}"
        )));
    }
    let n = x_design.nrows();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "response length {} != n = {n}",
            y.len()
        )));
    }
    let prob = LassoProblem::unweighted(x_design.clone(), y.clone(), lambda, Family::Gaussian)?
        .without_intercept();
    let opts = SolverOptions {
        coef_tol: 1e-13,
        kkt_tol: 1e-9,
        max_sweeps: 400_000,
    };
    let sol = solver::solve_lasso_with(&prob, None, &opts)?;
    if !sol.converged {
        return Err(Error::NonConvergence(
            "selection-event lasso did not converge".into(),
        ));
    }
    let support = sol.support();
    let signs: Vec<f64> = support
        .iter()
        .map(|&j| sol.coefficients[j].signum())
        .collect();
    let event = build_selection_event(x_design, &support, &signs, lambda)?;
    let slack = event.max_slack(y);
    if slack > 1e-8 {
        return Err(Error::InconsistentEvent(slack));
    }
    Ok(event)
}

/// Assembles `A(M, s)` and `b(M, s)` for a given support and sign pattern.
pub fn build_selection_event(
    x_design: &Array2<f64>,
    support: &[usize],
    signs: &[f64],
    lambda: f64,
) -> Result<SelectionEvent> {
    let n = x_design.nrows();
    let p = x_design.ncols();
    let m = support.len();
    if signs.len() != m {
        return Err(Error::Dimension(format!(
            "{} signs for support of size {m}",
            signs.len()
        )));
    }
    let inactive: Vec<usize> = (0..p).filter(|j| !support.contains(j)).collect();
    let mi = inactive.len();

    let mut x_m = Array2::zeros((n, m));
    for (c, &j) in support.iter().enumerate() {
        x_m.column_mut(c).assign(&x_design.column(j));
    }
    let s = Array1::from_vec(signs.to_vec());

    let (gram_inv, proj) = if m > 0 {
        let gram = x_m.t().dot(&x_m);
        let gram_inv = linalg::inverse(&gram)
            .map_err(|_| Error::RankDeficient("active design X_M is rank deficient".into()))?;
        let proj = x_m.dot(&gram_inv).dot(&x_m.t());
        (gram_inv, proj)
    } else {
        (Array2::zeros((0, 0)), Array2::zeros((n, n)))
    };

    let rows = 2 * mi + m;
    let mut a = Array2::zeros((rows, n));
    let mut b = Array1::zeros(rows);

    // X_M (X_M'X_M)^{-1} s, shared by both inactive blocks
    let xm_gs: Array1<f64> = if m > 0 {
        x_m.dot(&gram_inv.dot(&s))
    } else {
        Array1::zeros(n)
    };

    for (r, &j) in inactive.iter().enumerate() {
        let xj = x_design.column(j);
        // row = (1/lambda) x_j' (I - P_M); P_M is symmetric
        let pxj = proj.dot(&xj);
        for i in 0..n {
            let v = (xj[i] - pxj[i]) / lambda;
            a[[r, i]] = v;
            a[[mi + r, i]] = -v;
        }
        let dot = xj.dot(&xm_gs);
        b[r] = 1.0 - dot;
        b[mi + r] = 1.0 + dot;
    }
    if m > 0 {
        // -diag(s) (X_M'X_M)^{-1} X_M'
        let g_xmt = gram_inv.dot(&x_m.t());
        let gs = gram_inv.dot(&s);
        for r in 0..m {
            for i in 0..n {
                a[[2 * mi + r, i]] = -signs[r] * g_xmt[[r, i]];
            }
            b[2 * mi + r] = -lambda * signs[r] * gs[r];
        }
    }
    Ok(SelectionEvent {
        support: support.to_vec(),
        signs: signs.to_vec(),
        a,
        b,
        lambda,
    })
}

/// Result of the post-selective sum-zero test.
#[derive(Debug, Clone)]
pub struct PivotResult {
    /// Test direction `eta = X_M (X_M'X_M)^{-1} 1`.
    pub eta: Array1<f64>,
    pub vminus: f64,
    pub vplus: f64,
    /// Observed statistic `eta' y`.
    pub statistic: f64,
    /// Noise standard deviation used.
    pub sigma: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

/// Truncation interval for `eta' y` implied by the event, a function of the
/// component `z = (I - P_eta) y` only. Rows whose contraction with the
/// direction is below 1e-12 in absolute value are treated as exactly zero.
fn truncation_interval(event: &SelectionEvent, c: &Array1<f64>, z: &Array1<f64>) -> (f64, f64) {
    let alpha = event.a.dot(c);
    let rho = {
        let az = event.a.dot(z);
        let mut r = event.b.clone();
        r.zip_mut_with(&az, |bi, ai| *bi -= ai);
        r
    };
    let mut vminus = f64::NEG_INFINITY;
    let mut vplus = f64::INFINITY;
    for j in 0..alpha.len() {
        let aj = alpha[j];
        if aj.abs() < 1e-12 {
            continue;
        }
        let bound = rho[j] / aj;
        if aj > 0.0 {
            vplus = vplus.min(bound);
        } else {
            vminus = vminus.max(bound);
        }
    }
    (vminus, vplus)
}

/// Post-selective test of the hypothesis that the selected-model partial
/// regression coefficients sum to zero, conditional on the lasso selecting
/// exactly this support and sign pattern.
pub fn selective_sum_zero_test(
    event: &SelectionEvent,
    x_design: &Array2<f64>,
    y: &Array1<f64>,
    sigma: f64,
) -> Result<PivotResult> {
    if event.support.is_empty() {
        return Err(Error::NoTest("empty support selected by the lasso".into()));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = x_design.nrows();
    let m = event.support.len();
    let mut x_m = Array2::zeros((n, m));
    for (c, &j) in event.support.iter().enumerate() {
        x_m.column_mut(c).assign(&x_design.column(j));
    }
    let gram = x_m.t().dot(&x_m);
    let ones = Array1::ones(m);
    let g1 = linalg::solve(&gram, &ones)
        .map_err(|_| Error::RankDeficient("active design X_M is rank deficient".into()))?;
    let eta = x_m.dot(&g1);
    let eta_norm2 = eta.dot(&eta);
    if eta_norm2 <= 0.0 {
        return Err(Error::NoTest("degenerate test direction".into()));
    }
    let statistic = eta.dot(y);
    let c = eta.mapv(|v| v / eta_norm2);
    let z = {
        let mut z = y.clone();
        z.zip_mut_with(&c, |zi, ci| *zi -= ci * statistic);
        z
    };
    let (vminus, vplus) = truncation_interval(event, &c, &z);
    if vminus > vplus {
        return Err(Error::InfeasibleInterval { vminus, vplus });
    }
    let sd = sigma * eta_norm2.sqrt();
    // A y <= b guarantees the statistic lies inside up to float slack
    let x = statistic.clamp(vminus, vplus);
    let cdf = truncated_gaussian_cdf(x, 0.0, sd, vminus, vplus)?;
    // small p-value when the coefficient sum looks positive
    let p_one = (1.0 - cdf).clamp(0.0, 1.0);
    let p_two = 1.0 - 2.0 * (p_one - 0.5).abs();
    Ok(PivotResult {
        eta,
        vminus,
        vplus,
        statistic,
        sigma,
        p_one_sided: p_one,
        p_two_sided: p_two,
    })
}

/// Two-sided Kolmogorov-Smirnov distance between a sample and Unif(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        let hi = (i as f64 + 1.0) / m - u;
        let lo = u - i as f64 / m;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic two-sided KS critical value at the given level.
pub fn ks_uniform_critical(n: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c / (n as f64).sqrt()
}

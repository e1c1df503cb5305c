//! Forward stepwise selection over log-ratio features.
//!
//! [`approx_forward_stepwise`] never materializes the expanded ratio matrix:
//! at each step it runs the p univariate regressions of the residual on the
//! standardized log features, pairs the most positive with the most negative
//! coefficient, and refits the selected ratios by least squares. Per-step
//! cost is O(np) plus the refit, so k steps cost O(npk).
//!
//! [`exact_forward_stepwise`] is the classical greedy procedure on an
//! explicit column matrix. It doubles as the stage-two engine of the
//! two-stage estimator and as the oracle the approximate procedure is tested
//! against: on mutually orthogonal standardized columns the two make
//! identical selections.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};

use crate::data::LogDesign;
use crate::error::{Error, Result};
use crate::linalg;

/// Why a stepwise run ended before `k` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Requested number of steps completed.
    Completed,
    /// No remaining positive or no remaining negative univariate coefficient.
    NoSignVariety,
    /// The same pair was selected twice in a row (no progress).
    Stalled,
    /// All remaining candidates are numerically collinear with the span.
    Exhausted,
}

/// Trace of a forward stepwise run.
#[derive(Debug, Clone)]
pub struct StepwiseTrace {
    /// Selected (j, k) pairs, j < k, in selection order.
    pub selected: Vec<(usize, usize)>,
    /// Refit coefficients after each step; entry s has length s + 1.
    pub coefficients_per_step: Vec<Vec<f64>>,
    /// Refit intercepts after each step (index 0 is the null model).
    pub intercepts_per_step: Vec<f64>,
    /// Residual norms, one entry per model size starting at the null model.
    pub residual_norms: Vec<f64>,
    pub runtime_per_step: Vec<Duration>,
    pub stopped_early: bool,
    pub stop_reason: StopReason,
}

impl StepwiseTrace {
    fn empty(y: &Array1<f64>) -> Self {
        let n = y.len() as f64;
        let ybar = y.sum() / n;
        let r0 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>().sqrt();
        StepwiseTrace {
            selected: Vec::new(),
            coefficients_per_step: vec![Vec::new()],
            intercepts_per_step: vec![ybar],
            residual_norms: vec![r0],
            runtime_per_step: Vec::new(),
            stopped_early: false,
            stop_reason: StopReason::Completed,
        }
    }

    /// Coefficients and intercept of the model truncated to `k` steps.
    pub fn model_at(&self, k: usize) -> (&[(usize, usize)], &[f64], f64) {
        let k = k.min(self.selected.len());
        (
            &self.selected[..k],
            &self.coefficients_per_step[k],
            self.intercepts_per_step[k],
        )
    }
}

/// Approximate forward stepwise selection on a standardized log design.
///
/// Requires the design to be centered and scaled; univariate coefficients on
/// standardized columns are then comparable as correlations. Refits use the
/// ratio columns in natural (unscaled) units so the result is a genuine
/// log-ratio model.
pub fn approx_forward_stepwise(
    w: &LogDesign,
    y: &Array1<f64>,
    k: usize,
) -> Result<StepwiseTrace> {
    if !w.centered || !w.scaled {
        return Err(Error::InvalidArgument(
            "approximate forward stepwise requires a mean-0, variance-1 standardized design"
                .into(),
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
    let mut trace = StepwiseTrace::empty(y);
    let ybar = y.sum() / n as f64;
    let mut residual: Array1<f64> = y.mapv(|v| v - ybar);
    let denom = n as f64 - 1.0;

    // natural-unit ratio columns for the refits, built incrementally
    let mut ratio_cols: Vec<Array1<f64>> = Vec::new();

    for _ in 0..k {
        let started = Instant::now();
        // univariate coefficients of the residual on each standardized column
        let mut best_pos: Option<(usize, f64)> = None;
        let mut best_neg: Option<(usize, f64)> = None;
        for j in 0..p {
            let c: f64 = w.w.column(j).dot(&residual) / denom;
            if c > 0.0 && best_pos.is_none_or(|(_, b)| c > b) {
                best_pos = Some((j, c));
            }
            if c < 0.0 && best_neg.is_none_or(|(_, b)| c < b) {
                best_neg = Some((j, c));
            }
        }
        let (Some((i_pos, _)), Some((i_neg, _))) = (best_pos, best_neg) else {
            trace.stopped_early = true;
            trace.stop_reason = StopReason::NoSignVariety;
            break;
        };
        let pair = (i_pos.min(i_neg), i_pos.max(i_neg));
        if trace.selected.contains(&pair) {
            trace.stopped_early = true;
            trace.stop_reason = StopReason::Stalled;
            break;
        }
        trace.selected.push(pair);
        ratio_cols.push(w.centered_ratio_column(pair.0, pair.1));

        // refit all selected ratios plus intercept
        let m = ratio_cols.len();
        let mut design = Array2::ones((n, m + 1));
        for (c, col) in ratio_cols.iter().enumerate() {
            design.column_mut(c + 1).assign(col);
        }
        let coef = linalg::least_squares(&design, y)?;
        let fitted = design.dot(&coef);
        residual = y - &fitted;
        trace
            .coefficients_per_step
            .push(coef.iter().skip(1).cloned().collect());
        trace.intercepts_per_step.push(coef[0]);
        trace
            .residual_norms
            .push(residual.dot(&residual).sqrt());
        trace.runtime_per_step.push(started.elapsed());
    }
    debug_assert!(trace
        .residual_norms
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0])));
    Ok(trace)
}

/// Exact forward stepwise selection on an explicit (expanded) column matrix.
///
/// Greedily adds the column maximizing the correlation criterion
/// `|r' z| / ||z||` against the current residual, skipping candidates whose
/// residualized norm falls below 1e-10 (numerically collinear with the span),
/// and refits all selected columns plus intercept by least squares each step.
/// Ties are broken towards the lowest column index.
///
/// On ratio columns of mutually orthogonal standardized features all column
/// norms coincide, and the selection sequence equals that of
/// [`approx_forward_stepwise`].
pub fn exact_forward_stepwise(
    z: &Array2<f64>,
    pair_index: &[(usize, usize)],
    y: &Array1<f64>,
    k: usize,
) -> Result<StepwiseTrace> {
    if pair_index.len() != z.ncols() {
        return Err(Error::Dimension(format!(
            "{} pair labels for {} columns",
            pair_index.len(),
            z.ncols()
        )));
    }
    let cols = greedy_forward_columns(z, y, k)?;
    Ok(StepwiseTrace {
        selected: cols.selected.iter().map(|&c| pair_index[c]).collect(),
        coefficients_per_step: cols.coefficients_per_step,
        intercepts_per_step: cols.intercepts_per_step,
        residual_norms: cols.residual_norms,
        runtime_per_step: cols.runtime_per_step,
        stopped_early: cols.stopped_early,
        stop_reason: cols.stop_reason,
    })
}

/// Trace of a greedy forward selection over raw column indices.
#[derive(Debug, Clone)]
pub struct ColumnTrace {
    pub selected: Vec<usize>,
    pub coefficients_per_step: Vec<Vec<f64>>,
    pub intercepts_per_step: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub runtime_per_step: Vec<Duration>,
    pub stopped_early: bool,
    pub stop_reason: StopReason,
}

impl ColumnTrace {
    /// Columns, coefficients and intercept of the model truncated to `k`
    /// steps.
    pub fn model_at(&self, k: usize) -> (&[usize], &[f64], f64) {
        let k = k.min(self.selected.len());
        (
            &self.selected[..k],
            &self.coefficients_per_step[k],
            self.intercepts_per_step[k],
        )
    }
}

/// Greedy forward selection over the columns of `z`: adds the column with
/// the largest `|r' z| / ||z||` each step and refits by least squares.
pub fn greedy_forward_columns(z: &Array2<f64>, y: &Array1<f64>, k: usize) -> Result<ColumnTrace> {
    let n = z.nrows();
    let m = z.ncols();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "response length {} != n = {n}",
            y.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in expanded matrix".into()));
    }
    let n_f = n as f64;
    let ybar = y.sum() / n_f;
    let r0 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>().sqrt();
    let mut trace = ColumnTrace {
        selected: Vec::new(),
        coefficients_per_step: vec![Vec::new()],
        intercepts_per_step: vec![ybar],
        residual_norms: vec![r0],
        runtime_per_step: Vec::new(),
        stopped_early: false,
        stop_reason: StopReason::Completed,
    };
    let mut residual: Array1<f64> = y.mapv(|v| v - ybar);
    let col_norms: Vec<f64> = (0..m)
        .map(|c| {
            let col = z.column(c);
            col.dot(&col).sqrt()
        })
        .collect();

    // orthonormal basis of the selected span (including the intercept
    // direction), used only to reject numerically collinear winners
    let ones = Array1::from_elem(n, 1.0 / n_f.sqrt());
    let mut basis: Vec<Array1<f64>> = vec![ones];
    let mut chosen: Vec<usize> = Vec::new();
    let mut ineligible = vec![false; m];

    'steps: for _ in 0..k.min(m) {
        let started = Instant::now();
        let r_norm = residual.dot(&residual).sqrt();
        // scanning is one dot product per candidate; the collinearity check
        // runs only on the winner, since a column inside the span scores
        // essentially zero and cannot win
        let accepted = loop {
            let mut best: Option<(usize, f64)> = None;
            for c in 0..m {
                if ineligible[c] || chosen.contains(&c) || col_norms[c] < 1e-300 {
                    continue;
                }
                let score = (residual.dot(&z.column(c)) / col_norms[c]).abs();
                if score <= 1e-12 * (1.0 + r_norm) {
                    continue;
                }
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((c, score));
                }
            }
            let Some((c, _)) = best else {
                trace.stopped_early = true;
                trace.stop_reason = StopReason::Exhausted;
                break 'steps;
            };
            let mut v = z.column(c).to_owned();
            for b in &basis {
                let d = v.dot(b);
                v.zip_mut_with(b, |vi, bi| *vi -= d * bi);
            }
            let norm = v.dot(&v).sqrt();
            if norm < 1e-10 {
                ineligible[c] = true;
                continue;
            }
            basis.push(v.mapv(|x| x / norm));
            break c;
        };
        chosen.push(accepted);
        trace.selected.push(accepted);

        // full refit on the chosen columns plus intercept
        let q = chosen.len();
        let mut design = Array2::ones((n, q + 1));
        for (ci, &col) in chosen.iter().enumerate() {
            design.column_mut(ci + 1).assign(&z.column(col));
        }
        let coef = linalg::least_squares(&design, y)?;
        let fitted = design.dot(&coef);
        residual = y - &fitted;
        trace
            .coefficients_per_step
            .push(coef.iter().skip(1).cloned().collect());
        trace.intercepts_per_step.push(coef[0]);
        trace.residual_norms.push(residual.dot(&residual).sqrt());
        trace.runtime_per_step.push(started.elapsed());
    }
    debug_assert!(trace
        .residual_norms
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0])));
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Random n x p matrix with exactly orthogonal, mean-zero, unit-sample-sd
    /// columns.
    pub(crate) fn orthogonal_standardized(n: usize, p: usize, seed: u64) -> Array2<f64> {
        assert!(n > p + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Array1<f64>> = Vec::new();
        while cols.len() < p {
            let mut v = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
            let mean = v.sum() / n as f64;
            v.mapv_inplace(|x| x - mean);
            for c in &cols {
                let d = v.dot(c) / c.dot(c);
                v.zip_mut_with(c, |vi, ci| *vi -= d * ci);
            }
            let norm = v.dot(&v).sqrt();
            if norm < 1e-8 {
                continue;
            }
            // unit sample sd: ||col||^2 = n - 1
            let scale = ((n as f64 - 1.0).sqrt()) / norm;
            cols.push(v.mapv(|x| x * scale));
        }
        let mut m = Array2::zeros((n, p));
        for (j, c) in cols.iter().enumerate() {
            m.column_mut(j).assign(c);
        }
        m
    }

    fn design_from(w: Array2<f64>) -> LogDesign {
        LogDesign::from_log_matrix(w, true, true).unwrap()
    }

    #[test]
    fn zero_steps_returns_centered_residual() {
        let w = design_from(orthogonal_standardized(20, 4, 1));
        let y = Array1::from_shape_fn(20, |i| i as f64);
        let trace = approx_forward_stepwise(&w, &y, 0).unwrap();
        assert!(trace.selected.is_empty());
        let ybar = y.sum() / 20.0;
        let expect = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(trace.residual_norms[0], expect, epsilon = 1e-10);
    }

    #[test]
    fn recovers_planted_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hits = 0;
        for rep in 0..200 {
            let w = orthogonal_standardized(40, 10, 1000 + rep);
            let signal = {
                let c0 = w.column(0).to_owned();
                let c1 = w.column(1).to_owned();
                c0 - c1
            };
            let scale = 3.0 / signal.dot(&signal).sqrt();
            // SNR 20 on the planted direction
            let noise_sd = 3.0 / 20.0;
            let y = signal.mapv(|v| v * scale)
                + Array1::from_shape_fn(40, |_| noise_sd * rng.sample::<f64, _>(StandardNormal));
            let ld = design_from(w);
            let trace = approx_forward_stepwise(&ld, &y, 1).unwrap();
            if trace.selected.first() == Some(&(0, 1)) {
                hits += 1;
            }
        }
        assert!(hits >= 190, "recovered planted pair in {hits}/200 runs");
    }

    #[test]
    fn agrees_with_exact_on_orthogonal_designs() {
        // On signal-bearing responses the sequences agree exactly; on pure
        // noise the approximate procedure may hit its one-sign stop first, in
        // which case its trace is a prefix of the exact one.
        for seed in 0..10 {
            let w = orthogonal_standardized(50, 8, 40 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            // three planted ratios of distinct amplitude, so every step has
            // a strictly dominant pick (exact ties break arbitrarily under
            // float rounding)
            let signal = {
                let z01 = w.column(0).to_owned() - w.column(1).to_owned();
                let z23 = w.column(2).to_owned() - w.column(3).to_owned();
                let z45 = w.column(4).to_owned() - w.column(5).to_owned();
                z01.mapv(|v| 2.0 * v) + z23.mapv(|v| 1.2 * v) + z45.mapv(|v| 0.6 * v)
            };
            let y_signal =
                signal + Array1::from_shape_fn(50, |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
            let y_noise = Array1::from_shape_fn(50, |_| rng.sample::<f64, _>(StandardNormal));
            let ld = design_from(w);
            let (z, pairs) = crate::data::expand_ratios(&ld, None).unwrap();

            let approx = approx_forward_stepwise(&ld, &y_signal, 3).unwrap();
            let exact = exact_forward_stepwise(&z, &pairs, &y_signal, 3).unwrap();
            assert_eq!(approx.selected, exact.selected, "signal case, seed {seed}");

            // first-step agreement holds even on noise (later steps can tie:
            // the refit forces equal univariate coefficients on the two
            // features of every selected ratio)
            let approx_n = approx_forward_stepwise(&ld, &y_noise, 1).unwrap();
            let exact_n = exact_forward_stepwise(&z, &pairs, &y_noise, 1).unwrap();
            assert_eq!(approx_n.selected, exact_n.selected, "noise step 1, seed {seed}");
        }
    }

    #[test]
    fn exact_single_column_selected_iff_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = Array2::from_shape_fn((30, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let col = z.column(0).to_owned();
        let y = col.mapv(|v| 2.0 * v);
        let trace = exact_forward_stepwise(&z, &[(0, 1)], &y, 1).unwrap();
        assert_eq!(trace.selected, vec![(0, 1)]);
        // a constant response has zero correlation with every candidate
        let y_flat = Array1::from_elem(30, 1.0);
        let trace2 = exact_forward_stepwise(&z, &[(0, 1)], &y_flat, 1).unwrap();
        assert!(trace2.selected.is_empty());
    }

    #[test]
    fn exact_recovers_two_disjoint_ratios_noiselessly() {
        let w = orthogonal_standardized(30, 6, 11);
        let ld = design_from(w);
        let (z, pairs) = crate::data::expand_ratios(&ld, None).unwrap();
        let idx_01 = pairs.iter().position(|&p| p == (0, 1)).unwrap();
        let idx_23 = pairs.iter().position(|&p| p == (2, 3)).unwrap();
        let y = {
            let a = z.column(idx_01).to_owned();
            let b = z.column(idx_23).to_owned();
            a.mapv(|v| 2.0 * v) + b
        };
        let trace = exact_forward_stepwise(&z, &pairs, &y, 2).unwrap();
        let mut got = trace.selected.clone();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 1), (2, 3)]);
        assert!(trace.residual_norms.last().unwrap() < &1e-8);
    }

    #[test]
    fn exact_skips_collinear_candidates() {
        // second column is an exact copy of the first
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let base = Array1::from_shape_fn(25, |_| rng.sample::<f64, _>(StandardNormal));
        let mut z = Array2::zeros((25, 2));
        z.column_mut(0).assign(&base);
        z.column_mut(1).assign(&base);
        let y = base.mapv(|v| v + 0.1);
        let trace = exact_forward_stepwise(&z, &[(0, 1), (0, 2)], &y, 2).unwrap();
        assert_eq!(trace.selected.len(), 1);
        assert!(trace.stopped_early);
        assert_eq!(trace.stop_reason, StopReason::Exhausted);
    }

    #[test]
    fn residual_norms_weakly_decreasing() {
        let w = orthogonal_standardized(60, 12, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let y = Array1::from_shape_fn(60, |_| rng.sample::<f64, _>(StandardNormal));
        let ld = design_from(w);
        let trace = approx_forward_stepwise(&ld, &y, 6).unwrap();
        for pair in trace.residual_norms.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10);
        }
    }

    #[test]
    fn requires_standardized_design() {
        let w = LogDesign::from_log_matrix(orthogonal_standardized(20, 4, 19), true, false)
            .unwrap();
        let y = Array1::zeros(20);
        assert!(approx_forward_stepwise(&w, &y, 1).is_err());
    }

    #[test]
    fn all_zero_response_stops_without_signs() {
        let w = design_from(orthogonal_standardized(20, 4, 23));
        let y = Array1::zeros(20);
        let trace = approx_forward_stepwise(&w, &y, 3).unwrap();
        assert!(trace.selected.is_empty());
        assert!(trace.stopped_early);
        assert_eq!(trace.stop_reason, StopReason::NoSignVariety);
    }
}


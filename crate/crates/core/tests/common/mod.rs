#![allow(dead_code)] // each test target compiles its own copy and uses a subset

//! Shared oracles for the integration and acceptance suites.
//!
//! Both solvers here are deliberately independent of the coordinate-descent
//! production path: a FISTA proximal-gradient lasso on an explicit column
//! matrix, and a projected-gradient solver for the variable-splitting QP
//! form of the sum-zero constrained lasso.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn spectral_norm(z: &Array2<f64>, iters: usize) -> f64 {
    let q = z.ncols();
    let mut v = Array1::from_elem(q, 1.0 / (q as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..iters {
        let zv = z.dot(&v);
        let mut w = z.t().dot(&zv);
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        w /= norm;
        lam = norm;
        v = w;
    }
    lam
}

/// Proximal-gradient (FISTA) solution of
/// `min 0.5 ||yc - Z theta||^2 + lambda ||theta||_1`
/// on centered columns, with the intercept profiled out as the response
/// mean. Returns `(theta, objective)`.
pub fn prox_lasso(z: &Array2<f64>, yc: &Array1<f64>, lambda: f64) -> (Array1<f64>, f64) {
    let q = z.ncols();
    let lip = spectral_norm(z, 300).max(1e-12);
    let step = 1.0 / lip;
    let mut theta = Array1::zeros(q);
    let mut momentum = theta.clone();
    let mut t_acc: f64 = 1.0;
    let objective = |th: &Array1<f64>| -> f64 {
        let r = yc - &z.dot(th);
        0.5 * r.dot(&r) + lambda * th.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut prev_obj = objective(&theta);
    for it in 0..400_000 {
        let grad = z.t().dot(&(z.dot(&momentum) - yc));
        let mut next = Array1::zeros(q);
        for j in 0..q {
            next[j] = soft(momentum[j] - step * grad[j], step * lambda);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        let accel = (t_acc - 1.0) / t_next;
        momentum = &next + &((&next - &theta).mapv(|v| v * accel));
        theta = next;
        t_acc = t_next;
        if it % 50 == 49 {
            let obj = objective(&theta);
            if (prev_obj - obj).abs() <= 1e-13 * (1.0 + obj.abs()) {
                break;
            }
            // FISTA restarts on non-monotone segments
            if obj > prev_obj {
                momentum = theta.clone();
                t_acc = 1.0;
            }
            prev_obj = obj;
        }
    }
    let obj = objective(&theta);
    (theta, obj)
}

/// Projected-gradient solution of the variable-splitting QP form of the
/// sum-zero constrained lasso:
///
/// ```text
///     min 0.5 ||yc - W (b+ - b-)||^2 + gamma 1'(b+ + b-)
///     s.t. b+ >= 0, b- >= 0, 1'b+ - 1'b- = 0
/// ```
///
/// Small sizes only. Returns `(beta, objective)`.
pub fn qp_splitting_constrained(
    w: &Array2<f64>,
    yc: &Array1<f64>,
    gamma: f64,
) -> (Array1<f64>, f64) {
    let p = w.ncols();
    let lip = 2.0 * spectral_norm(w, 300).powi(2).max(1e-12);
    let step = 1.0 / lip;
    // v = (b+, b-); signs of the equality constraint
    let sign = |i: usize| if i < p { 1.0 } else { -1.0 };
    let project = |x: &Array1<f64>| -> Array1<f64> {
        // projection onto {v >= 0, sum b+ = sum b-} via the scalar dual:
        // v(mu) = max(0, x - mu * a), root-find a'v(mu) = 0
        let h = |mu: f64| -> f64 {
            let mut acc = 0.0;
            for i in 0..2 * p {
                let vi = (x[i] - mu * sign(i)).max(0.0);
                acc += sign(i) * vi;
            }
            acc
        };
        let scale = x.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        let (mut lo, mut hi) = (-scale - 1.0, scale + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = 0.5 * (lo + hi);
        Array1::from_shape_fn(2 * p, |i| (x[i] - mu * sign(i)).max(0.0))
    };
    let beta_of = |v: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(p, |j| v[j] - v[p + j])
    };
    let objective = |v: &Array1<f64>| -> f64 {
        let beta = beta_of(v);
        let r = yc - &w.dot(&beta);
        0.5 * r.dot(&r) + gamma * v.sum()
    };
    let mut v = Array1::zeros(2 * p);
    let mut prev_obj = objective(&v);
    for it in 0..400_000 {
        let beta = beta_of(&v);
        let r = w.dot(&beta) - yc;
        let g_beta = w.t().dot(&r);
        let mut grad = Array1::zeros(2 * p);
        for j in 0..p {
            grad[j] = g_beta[j] + gamma;
            grad[p + j] = -g_beta[j] + gamma;
        }
        let candidate = &v - &grad.mapv(|g| g * step);
        v = project(&candidate);
        if it % 200 == 199 {
            let obj = objective(&v);
            if (prev_obj - obj).abs() <= 1e-13 * (1.0 + obj.abs()) {
                break;
            }
            prev_obj = obj;
        }
    }
    let beta = beta_of(&v);
    let obj = objective(&v);
    (beta, obj)
}

/// Strictly positive random matrix (exponentiated Gaussians).
pub fn positive_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal).exp())
}

pub fn gaussian_vector(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
}

//! Small dense linear-algebra helpers.
//!
//! Everything in this crate works with modest dimensions (p up to a few
//! hundred, refits on a handful of columns), so plain Gaussian elimination
//! with partial pivoting is enough and avoids a LAPACK dependency.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!(
            "solve: A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        // pivot
        let mut piv = col;
        let mut best = m[[col, col]].abs();
        for r in (col + 1)..n {
            let v = m[[r, col]].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(Error::RankDeficient(format!(
                "singular matrix at pivot {col}"
            )));
        }
        if piv != col {
            for c in 0..n {
                m.swap([col, c], [piv, c]);
            }
            rhs.swap(col, piv);
        }
        let d = m[[col, col]];
        for r in (col + 1)..n {
            let f = m[[r, col]] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[[r, c]] -= f * m[[col, c]];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for c in (row + 1)..n {
            s -= m[[row, c]] * x[c];
        }
        x[row] = s / m[[row, row]];
    }
    Ok(x)
}

/// Inverts a square matrix. Only used for small Gram matrices.
pub fn inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        let col = solve(a, &e)?;
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    Ok(inv)
}

/// Least squares `min ||y - X b||^2` via the normal equations.
///
/// Errors with `RankDeficient` when the Gram matrix is singular.
pub fn least_squares(x: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "least_squares: X has {} rows, y has length {}",
            x.nrows(),
            y.len()
        )));
    }
    let gram = x.t().dot(x);
    let xty = x.t().dot(y);
    solve(&gram, &xty)
}

/// Weighted least squares `min sum_i w_i (y_i - x_i' b)^2`.
pub fn weighted_least_squares(
    x: &Array2<f64>,
    y: &Array1<f64>,
    w: &Array1<f64>,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    let q = x.ncols();
    let mut gram = Array2::zeros((q, q));
    let mut rhs = Array1::zeros(q);
    for i in 0..n {
        let wi = w[i];
        for a in 0..q {
            let xa = x[[i, a]];
            rhs[a] += wi * xa * y[i];
            for b in a..q {
                gram[[a, b]] += wi * xa * x[[i, b]];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    solve(&gram, &rhs)
}

/// Largest eigenvalue of `X' X` by power iteration, for Lipschitz constants.
pub fn gram_spectral_norm(x: &Array2<f64>, iters: usize) -> f64 {
    let q = x.ncols();
    if q == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(q, 1.0 / (q as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..iters {
        let xv = x.dot(&v);
        let mut w = x.t().dot(&xv);
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

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solve_small_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![5.0, 10.0];
        let x = solve(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_an_error() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![1.0, 2.0];
        assert!(matches!(solve(&a, &b), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let b_true = array![2.0, -1.0];
        let y = x.dot(&b_true);
        let b = least_squares(&x, &y).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-10);
        assert!((b[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_of_identity_gram() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let lam = gram_spectral_norm(&x, 200);
        assert!((lam - 1.0).abs() < 1e-9);
    }
}

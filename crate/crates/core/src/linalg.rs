//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative ridge added to a Gram matrix whose factorization fails.
pub const RIDGE_SCALE: f64 = 1e-8;

/// Copies the listed columns of `x` into a new matrix.
pub fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |i, j| x[(i, idx[j])])
}

/// `x[:, idx] * coef`.
pub fn mul_columns(x: &DMatrix<f64>, idx: &[usize], coef: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(x.nrows());
    for (&j, &c) in idx.iter().zip(coef) {
        if c != 0.0 {
            out.axpy(c, &x.column(j), 1.0);
        }
    }
    out
}

/// `x[:, idx]' * v`.
pub fn tr_mul_columns(x: &DMatrix<f64>, idx: &[usize], v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&j| x.column(j).dot(v)))
}

/// Solves the SPD system `a x = b`, adding `RIDGE_SCALE * trace(a)` to the
/// diagonal if the Cholesky factorization fails. Returns the solution and
/// whether the ridge was needed.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return (x, false);
        }
    }
    (solve_spd_with_ridge(a, b).0, true)
}

/// Least squares `min ||a x - b||` by Householder QR. Falls back to a ridge
/// regularized normal-equation solve when `a` is rank deficient.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let (n, c) = a.shape();
    if c == 0 {
        return (DVector::zeros(0), false);
    }
    if n >= c {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..c).map(|i| r[(i, i)].abs()).collect();
        let dmax = diag.iter().copied().fold(0.0, f64::max);
        let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if dmax > 0.0 && dmin > 1e-10 * dmax {
            let mut rhs = b.clone();
            qr.q_tr_mul(&mut rhs);
            let top = rhs.rows(0, c).into_owned();
            if let Some(x) = r.solve_upper_triangular(&top) {
                return (x, false);
            }
        }
    }
    let gram = a.tr_mul(a);
    let rhs = a.tr_mul(b);
    let (x, _) = solve_spd_with_ridge(&gram, &rhs);
    (x, true)
}

fn solve_spd_with_ridge(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let trace = a.trace().abs().max(f64::MIN_POSITIVE);
    let mut mu = RIDGE_SCALE * trace;
    loop {
        let mut reg = a.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += mu;
        }
        if let Some(ch) = reg.cholesky() {
            return (ch.solve(b), mu);
        }
        mu *= 10.0;
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_extreme_eigenvalues(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Spectral norm of an arbitrary matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() >= a.ncols() {
        a.tr_mul(a)
    } else {
        a * a.transpose()
    };
    sym_extreme_eigenvalues(&gram).1.max(0.0).sqrt()
}

/// Power iteration for the largest eigenvalue of `x' x / n`.
pub fn top_gram_eigenvalue(x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return 0.0;
    }
    power_iteration(p, |v| x.tr_mul(&(x * v)) / n as f64)
}

/// Power iteration for the largest eigenvalue of a positive semidefinite
/// matrix.
pub fn top_psd_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    power_iteration(a.nrows(), |v| a * v)
}

fn power_iteration(p: usize, apply: impl Fn(&DVector<f64>) -> DVector<f64>) -> f64 {
    // fixed, non-symmetric start so the iteration is deterministic
    let mut v = DVector::from_fn(p, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut next = apply(&v);
        let est = v.dot(&next);
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        next /= norm;
        let done = (est - lambda).abs() <= 1e-10 * est.abs();
        lambda = est;
        v = next;
        if done {
            break;
        }
    }
    lambda
}

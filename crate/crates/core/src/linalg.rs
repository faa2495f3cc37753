//! Small dense linear-algebra helpers shared by the fitting modules.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal when a Cholesky factorisation fails
/// on a matrix that should be positive definite up to round-off.
const JITTER_REL: f64 = 1e-10;

/// Pivot-ratio cutoff declaring a factorisation rank deficient. Exactly
/// collinear inputs leave a pivot at round-off size (~1e-8 relative), which
/// the factorisation itself does not reject.
const RANK_TOL: f64 = 1e-7;

fn checked_factor(a: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let chol = Cholesky::new(a.clone())?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().cloned().fold(0.0f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let well_conditioned = max.is_finite() && min > RANK_TOL * max;
    if !well_conditioned {
        return None;
    }
    Some(chol)
}

/// Solve `A X = B` for symmetric positive-definite `A` via Cholesky.
/// `context` names the system in the error.
pub(crate) fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    debug_assert_eq!(a.nrows(), a.ncols());
    match checked_factor(a) {
        Some(chol) => {
            let solved = chol.solve(b);
            if solved.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular(context.to_string()));
            }
            Ok(solved)
        }
        None => Err(Error::Singular(context.to_string())),
    }
}

/// [`spd_solve`] with one jitter retry (`1e-10` relative to the mean
/// diagonal), so matrices positive definite up to round-off still factorise.
pub(crate) fn spd_solve_jittered(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    context: &str,
) -> Result<DMatrix<f64>> {
    if let Ok(solved) = spd_solve(a, b, context) {
        return Ok(solved);
    }
    let scale = a.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut jittered = a.clone();
    for i in 0..a.nrows() {
        jittered[(i, i)] += JITTER_REL * scale;
    }
    match checked_factor(&jittered) {
        Some(chol) => {
            let solved = chol.solve(b);
            if solved.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular(context.to_string()));
            }
            Ok(solved)
        }
        None => Err(Error::Singular(context.to_string())),
    }
}

/// A weighted least-squares fit of multivariate responses on a design,
/// computed through centred normal equations.
#[derive(Debug, Clone)]
pub(crate) struct WlsFit {
    /// Intercepts, one per response column.
    pub intercept: DVector<f64>,
    /// Coefficients, design-dim × response-dim.
    pub coefs: DMatrix<f64>,
}

impl WlsFit {
    /// Predicted responses for one design row.
    pub fn predict(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.intercept + self.coefs.transpose() * z
    }
}

/// Weighted least squares of `y` (n × p) on `z` (n × k) with intercept.
///
/// The normal equations are solved on the weighted covariance of `z`, with a
/// ridge term `ridge_rel * trace/k` added to the diagonal. Weights must be
/// nonnegative with a positive sum.
pub(crate) fn weighted_least_squares(
    z: &DMatrix<f64>,
    y: &DMatrix<f64>,
    weights: &DVector<f64>,
    ridge_rel: f64,
    context: &str,
) -> Result<WlsFit> {
    let n = z.nrows();
    let k = z.ncols();
    let p = y.ncols();
    if y.nrows() != n || weights.len() != n {
        return Err(Error::invalid(format!(
            "{context}: design has {n} rows, responses {}, weights {}",
            y.nrows(),
            weights.len()
        )));
    }
    let w_sum: f64 = weights.sum();
    if w_sum <= 0.0 || w_sum.is_nan() {
        return Err(Error::invalid(format!("{context}: weights sum to zero")));
    }

    // Weighted column means of design and responses.
    let mut mz = DVector::zeros(k);
    let mut my = DVector::zeros(p);
    for i in 0..n {
        let w = weights[i];
        for j in 0..k {
            mz[j] += w * z[(i, j)];
        }
        for j in 0..p {
            my[j] += w * y[(i, j)];
        }
    }
    mz /= w_sum;
    my /= w_sum;

    // Weighted covariances; any common divisor cancels in the solve, so the
    // raw weighted sums of centred cross-products are used directly.
    let mut czz = DMatrix::zeros(k, k);
    let mut czy = DMatrix::zeros(k, p);
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        for a in 0..k {
            let za = z[(i, a)] - mz[a];
            for b in a..k {
                czz[(a, b)] += w * za * (z[(i, b)] - mz[b]);
            }
            for b in 0..p {
                czy[(a, b)] += w * za * (y[(i, b)] - my[b]);
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            czz[(a, b)] = czz[(b, a)];
        }
    }

    if ridge_rel > 0.0 {
        let lambda = ridge_rel * czz.trace() / k as f64;
        for a in 0..k {
            czz[(a, a)] += lambda;
        }
    }

    let coefs = spd_solve(&czz, &czy, context)?;
    let intercept = &my - coefs.transpose() * &mz;
    Ok(WlsFit { intercept, coefs })
}

/// Symmetrise `(A + Aᵀ)/2` in place to kill round-off asymmetry.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen();
    eig.eigenvalues.min()
}

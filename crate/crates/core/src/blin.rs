//! Monte Carlo Bayes linear analysis.
//!
//! From first and second moments of the joint draw `(theta, s)` the best
//! linear estimator of `theta` given `s` under squared error is
//!
//! ```text
//! E_s(theta) = E(theta) + Cov(theta, s) Var(s)^-1 [s - E(s)]
//! ```
//!
//! with residual variance
//!
//! ```text
//! Var_s(theta) = Var(theta) - Cov(theta, s) Var(s)^-1 Cov(s, theta),
//! ```
//!
//! a conservative upper bound on the expected posterior variance
//! `E[Var(theta | s)]`, with equality when the posterior mean is linear in
//! `s`. Estimating the moments from a reference table makes these the exact
//! finite-sample mean and covariance of the linearly adjusted sample at full
//! acceptance — the two computations are the same algebra routed differently.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, spd_solve_jittered, symmetrize, weighted_least_squares};
use crate::table::ReferenceTable;

/// First and second sample moments of `(theta, s)`, optionally with the
/// statistic covariance shrunk towards its diagonal.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub mean_theta: DVector<f64>,
    pub mean_s: DVector<f64>,
    pub var_theta: DMatrix<f64>,
    /// `(1 - shrinkage) * S + shrinkage * diag(S)` for sample covariance `S`.
    pub var_s: DMatrix<f64>,
    /// p × d cross covariance.
    pub cov_theta_s: DMatrix<f64>,
    pub n_used: usize,
    pub shrinkage: f64,
}

/// Sample moments with unit weights.
pub fn estimate_moments(table: &ReferenceTable, shrinkage: f64) -> Result<MomentEstimate> {
    let w = DVector::from_element(table.n(), 1.0);
    estimate_moments_weighted(table, &w, shrinkage)
}

/// Weighted sample moments; kernel weights slot in here to realise the
/// kernel-weighted Bayes linear update. The covariance divisor
/// `sum(w) - sum(w^2)/sum(w)` reduces to `n - 1` for unit weights.
pub fn estimate_moments_weighted(
    table: &ReferenceTable,
    weights: &DVector<f64>,
    shrinkage: f64,
) -> Result<MomentEstimate> {
    let n = table.n();
    let p = table.param_dim();
    let d = table.stat_dim();
    if weights.len() != n {
        return Err(Error::invalid("weight vector does not match table rows"));
    }
    if weights.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("weights must be nonnegative and finite"));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::invalid(format!(
            "shrinkage {shrinkage} outside [0, 1]"
        )));
    }
    let w_sum: f64 = weights.sum();
    if w_sum <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    let w_sq: f64 = weights.iter().map(|v| v * v).sum();
    let divisor = w_sum - w_sq / w_sum;
    if divisor <= 0.0 {
        return Err(Error::invalid(
            "effective sample size too small for covariance estimation",
        ));
    }

    let params = table.params();
    let stats = table.stats();
    let mut mean_theta = DVector::zeros(p);
    let mut mean_s = DVector::zeros(d);
    for i in 0..n {
        let w = weights[i];
        for j in 0..p {
            mean_theta[j] += w * params[(i, j)];
        }
        for j in 0..d {
            mean_s[j] += w * stats[(i, j)];
        }
    }
    mean_theta /= w_sum;
    mean_s /= w_sum;

    let mut var_theta = DMatrix::zeros(p, p);
    let mut var_s = DMatrix::zeros(d, d);
    let mut cov_theta_s = DMatrix::zeros(p, d);
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        for a in 0..p {
            let ta = params[(i, a)] - mean_theta[a];
            for b in a..p {
                var_theta[(a, b)] += w * ta * (params[(i, b)] - mean_theta[b]);
            }
            for b in 0..d {
                cov_theta_s[(a, b)] += w * ta * (stats[(i, b)] - mean_s[b]);
            }
        }
        for a in 0..d {
            let sa = stats[(i, a)] - mean_s[a];
            for b in a..d {
                var_s[(a, b)] += w * sa * (stats[(i, b)] - mean_s[b]);
            }
        }
    }
    var_theta /= divisor;
    var_s /= divisor;
    cov_theta_s /= divisor;
    for a in 0..p {
        for b in 0..a {
            var_theta[(a, b)] = var_theta[(b, a)];
        }
    }
    for a in 0..d {
        for b in 0..a {
            var_s[(a, b)] = var_s[(b, a)];
        }
    }

    if shrinkage > 0.0 {
        for a in 0..d {
            for b in 0..d {
                if a != b {
                    var_s[(a, b)] *= 1.0 - shrinkage;
                }
            }
        }
    }

    Ok(MomentEstimate {
        mean_theta,
        mean_s,
        var_theta,
        var_s,
        cov_theta_s,
        n_used: n,
        shrinkage,
    })
}

fn solve_var_s(m: &MomentEstimate, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_solve_jittered(&m.var_s, rhs, "var(s)").map_err(|e| match e {
        Error::Singular(_) => Error::Singular(
            "var(s) is singular; increase shrinkage or drop redundant statistics".into(),
        ),
        other => other,
    })
}

/// Adjusted expectation `E_s(theta)`, linear in `s_obs`.
pub fn adjusted_expectation(m: &MomentEstimate, s_obs: &DVector<f64>) -> Result<DVector<f64>> {
    if s_obs.len() != m.mean_s.len() {
        return Err(Error::invalid("s_obs dimension does not match moments"));
    }
    let innovation = DMatrix::from_column_slice(s_obs.len(), 1, (s_obs - &m.mean_s).as_slice());
    let solved = solve_var_s(m, &innovation)?;
    Ok(&m.mean_theta + &m.cov_theta_s * solved.column(0))
}

/// Adjusted variance `Var_s(theta)`; symmetric by construction and
/// independent of the observed statistics.
pub fn adjusted_variance(m: &MomentEstimate) -> Result<DMatrix<f64>> {
    let solved = solve_var_s(m, &m.cov_theta_s.transpose())?;
    let mut var = &m.var_theta - &m.cov_theta_s * solved;
    symmetrize(&mut var);
    Ok(var)
}

/// Adjusted expectation and variance for one observation.
#[derive(Debug, Clone)]
pub struct BayesLinearSummary {
    pub adjusted_mean: DVector<f64>,
    pub adjusted_var: DMatrix<f64>,
    pub s_obs: DVector<f64>,
}

/// Spectral slack allowed when checking `Var_s(theta) <= Var(theta)`.
const PSD_TOL: f64 = 1e-8;

pub fn bayes_linear_summary(
    m: &MomentEstimate,
    s_obs: &DVector<f64>,
) -> Result<BayesLinearSummary> {
    let adjusted_mean = adjusted_expectation(m, s_obs)?;
    let adjusted_var = adjusted_variance(m)?;
    // Resolving on s can only reduce variance; a violation beyond round-off
    // means the var(s) solve went bad.
    let mut gap = &m.var_theta - &adjusted_var;
    symmetrize(&mut gap);
    let spectral = m.var_theta.norm();
    if min_eigenvalue(&gap) < -PSD_TOL * spectral.max(1.0) {
        return Err(Error::Numerical(
            "adjusted variance exceeds prior variance beyond tolerance".into(),
        ));
    }
    Ok(BayesLinearSummary {
        adjusted_mean,
        adjusted_var,
        s_obs: s_obs.clone(),
    })
}

/// Monte Carlo check of `Var_s(theta) >= E[Var(theta | s)]`.
#[derive(Debug, Clone)]
pub struct VarianceInequalityReport {
    /// Smallest eigenvalue of `Var_s(theta) - mean_k Var(theta | s_k)`.
    pub gap_min_eigenvalue: f64,
    /// Monte Carlo standard error of the gap along the minimising direction.
    pub std_error: f64,
    /// Average conditional variance over the supplied draws.
    pub expected_posterior_var: DMatrix<f64>,
    pub n_draws: usize,
}

/// Evaluate the conservative-bound inequality against an oracle for
/// `Var(theta | s)` over prior-predictive draws `s_draws` (one per row).
///
/// For models whose posterior mean is linear in `s` the gap is zero in
/// population, so the report doubles as an equality check there.
pub fn variance_inequality_check<F>(
    m: &MomentEstimate,
    s_draws: &DMatrix<f64>,
    posterior_var: F,
) -> Result<VarianceInequalityReport>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let k = s_draws.nrows();
    let p = m.mean_theta.len();
    if k < 2 {
        return Err(Error::invalid("need at least two prior-predictive draws"));
    }
    if s_draws.ncols() != m.mean_s.len() {
        return Err(Error::invalid("draw dimension does not match moments"));
    }
    let mut vars = Vec::with_capacity(k);
    let mut mean_var = DMatrix::zeros(p, p);
    for i in 0..k {
        let v = posterior_var(&s_draws.row(i).transpose())?;
        if v.nrows() != p || v.ncols() != p {
            return Err(Error::invalid("posterior variance oracle has wrong shape"));
        }
        mean_var += &v;
        vars.push(v);
    }
    mean_var /= k as f64;

    let mut gap = adjusted_variance(m)? - &mean_var;
    symmetrize(&mut gap);
    let eig = gap.clone().symmetric_eigen();
    let (mut min_idx, mut min_val) = (0, f64::INFINITY);
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < min_val {
            min_val = lambda;
            min_idx = j;
        }
    }
    let direction = eig.eigenvectors.column(min_idx).into_owned();

    // Spread of the conditional variance along the minimising direction.
    let projections: Vec<f64> = vars
        .iter()
        .map(|v| (direction.transpose() * v * &direction)[(0, 0)])
        .collect();
    let proj_mean = projections.iter().sum::<f64>() / k as f64;
    let proj_var = projections
        .iter()
        .map(|v| (v - proj_mean).powi(2))
        .sum::<f64>()
        / (k as f64 - 1.0);
    let std_error = (proj_var / k as f64).sqrt();

    Ok(VarianceInequalityReport {
        gap_min_eigenvalue: min_val,
        std_error,
        expected_posterior_var: mean_var,
        n_draws: k,
    })
}

/// Per-parameter linear projection statistics: the fitted regression
/// prediction of each `theta_j` from the full statistic vector.
#[derive(Debug, Clone)]
pub struct SemiAutomaticProjection {
    pub intercept: DVector<f64>,
    /// d × p coefficients.
    pub coefs: DMatrix<f64>,
}

impl SemiAutomaticProjection {
    /// Project one statistic vector to the p predicted parameters.
    pub fn project(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.intercept + self.coefs.transpose() * s
    }

    /// Projection statistics for every table row, n × p.
    pub fn project_rows(&self, table: &ReferenceTable) -> DMatrix<f64> {
        let n = table.n();
        let p = self.intercept.len();
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            let proj = self.project(&table.stat_row(i));
            out.row_mut(i).copy_from(&proj.transpose());
        }
        out
    }

    /// The table re-expressed with projection statistics as its summaries.
    pub fn project_table(&self, table: &ReferenceTable) -> Result<ReferenceTable> {
        let stats = self.project_rows(table);
        let names = table
            .param_names()
            .iter()
            .map(|n| format!("proj_{n}"))
            .collect();
        table.with_stats(stats, names)
    }
}

/// Fit the projection statistics by a global (unweighted) linear regression
/// of `theta` on `s` over the whole table.
pub fn semi_automatic_statistics(
    table: &ReferenceTable,
    ridge: f64,
) -> Result<SemiAutomaticProjection> {
    if table.n() <= table.stat_dim() + 2 {
        return Err(Error::invalid(
            "semi-automatic statistics need n > d + 2 table rows",
        ));
    }
    let w = DVector::from_element(table.n(), 1.0);
    let fit = weighted_least_squares(
        table.stats(),
        table.params(),
        &w,
        ridge,
        "semi-automatic projection",
    )?;
    Ok(SemiAutomaticProjection {
        intercept: fit.intercept,
        coefs: fit.coefs,
    })
}

//! Regression adjustment of accepted draws.
//!
//! Two post-processing schemes shift accepted parameter draws towards the
//! observed statistics:
//!
//! * weighted linear: fit `theta_i = alpha + beta' (s_i - s_obs) + e_i` by
//!   kernel-weighted least squares over the accepted rows and move each draw
//!   along the fitted plane, `theta_i - beta' (s_i - s_obs)`;
//! * heteroscedastic: fit a conditional mean `mu(s)` on a polynomial basis in
//!   `s - s_obs` (degree 1 or 2) and a diagonal conditional scale `sigma(s)`
//!   from a log-residual regression, then map
//!   `theta_i -> mu(s_obs) + sigma(s_obs) sigma(s_i)^-1 [theta_i - mu(s_i)]`.
//!
//! With a degree-1 mean and a constant scale the second scheme collapses to
//! the first. Adjusted draws are never clipped to the prior support;
//! out-of-support rows are only flagged.

use nalgebra::{DMatrix, DVector};

use crate::accept::AcceptanceResult;
use crate::error::{Error, Result};
use crate::linalg::{weighted_least_squares, WlsFit};
use crate::table::ReferenceTable;

/// Default relative ridge on the weighted covariance of the regressors,
/// enough to survive collinear statistics. Zero keeps exact arithmetic.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// How an accepted sample was post-processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustmentKind {
    /// Raw accepted draws.
    Rejection,
    /// Weighted linear regression adjustment.
    Linear,
    /// Nonlinear conditional mean with diagonal conditional scale.
    Heteroscedastic,
}

impl AdjustmentKind {
    pub fn name(self) -> &'static str {
        match self {
            AdjustmentKind::Rejection => "rejection",
            AdjustmentKind::Linear => "linear",
            AdjustmentKind::Heteroscedastic => "hetero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rejection" | "none" => Ok(AdjustmentKind::Rejection),
            "linear" => Ok(AdjustmentKind::Linear),
            "hetero" | "heteroscedastic" => Ok(AdjustmentKind::Heteroscedastic),
            other => Err(Error::invalid(format!("unknown adjustment '{other}'"))),
        }
    }
}

/// Weighted linear regression coefficients for the adjustment.
#[derive(Debug, Clone)]
pub struct LinearFit {
    /// Intercepts, one per parameter.
    pub alpha: DVector<f64>,
    /// Coefficients, statistic-dim × parameter-dim.
    pub beta: DMatrix<f64>,
    /// Relative ridge used in the fit.
    pub ridge: f64,
}

/// Post-processed draws with their provenance.
#[derive(Debug, Clone)]
pub struct AdjustedSample {
    /// Adjusted parameter draws, accepted-count × p.
    pub values: DMatrix<f64>,
    /// Kernel weights of the accepted rows, carried through unchanged.
    pub weights: DVector<f64>,
    /// Source row indices into the reference table.
    pub source_rows: Vec<usize>,
    pub adjustment: AdjustmentKind,
    /// Parameters whose margins were later replaced (order-statistic step).
    pub replaced_params: Vec<usize>,
    /// Row indices lying outside the prior support, set by
    /// [`AdjustedSample::flag_out_of_support`]. Rows are never clipped.
    pub out_of_support: Vec<usize>,
    pub warnings: Vec<String>,
}

impl AdjustedSample {
    /// The rejection "adjustment": accepted rows verbatim.
    pub fn from_acceptance(table: &ReferenceTable, acceptance: &AcceptanceResult) -> Self {
        let p = table.param_dim();
        let rows = &acceptance.accepted;
        let values = DMatrix::from_fn(rows.len(), p, |i, j| table.params()[(rows[i], j)]);
        AdjustedSample {
            values,
            weights: acceptance.accepted_weights(),
            source_rows: rows.clone(),
            adjustment: AdjustmentKind::Rejection,
            replaced_params: Vec::new(),
            out_of_support: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.values.ncols()
    }

    /// Unweighted sample mean of the adjusted draws.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.values.nrows() as f64;
        DVector::from_fn(self.values.ncols(), |j, _| self.values.column(j).sum() / n)
    }

    /// Unweighted sample covariance (divisor n-1).
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.values.nrows();
        let p = self.values.ncols();
        let mean = self.mean();
        let mut cov = DMatrix::zeros(p, p);
        for i in 0..n {
            for a in 0..p {
                let da = self.values[(i, a)] - mean[a];
                for b in a..p {
                    cov[(a, b)] += da * (self.values[(i, b)] - mean[b]);
                }
            }
        }
        cov /= n as f64 - 1.0;
        for a in 0..p {
            for b in 0..a {
                cov[(a, b)] = cov[(b, a)];
            }
        }
        cov
    }

    /// Record which rows fall outside the box `[lo, hi]`.
    pub fn flag_out_of_support(&mut self, lo: &DVector<f64>, hi: &DVector<f64>) {
        self.out_of_support = (0..self.values.nrows())
            .filter(|&i| {
                (0..self.values.ncols())
                    .any(|j| self.values[(i, j)] < lo[j] || self.values[(i, j)] > hi[j])
            })
            .collect();
    }
}

fn accepted_design(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let d = table.stat_dim();
    if s_obs.len() != d {
        return Err(Error::invalid("s_obs dimension does not match table"));
    }
    if acceptance.distances.len() != table.n() {
        return Err(Error::invalid("acceptance does not match table row count"));
    }
    let rows = &acceptance.accepted;
    let x = DMatrix::from_fn(rows.len(), d, |i, j| table.stats()[(rows[i], j)] - s_obs[j]);
    let y = DMatrix::from_fn(rows.len(), table.param_dim(), |i, j| {
        table.params()[(rows[i], j)]
    });
    Ok((x, y, acceptance.accepted_weights()))
}

/// Weighted least squares of the accepted `theta` on `s - s_obs`.
///
/// The normal equations add `ridge * trace/d` to the weighted covariance of
/// the statistics; a system still singular after that is reported with a hint
/// to enlarge `keep` or drop statistics.
pub fn fit_weighted_linear(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
    ridge: f64,
) -> Result<LinearFit> {
    let (x, y, w) = accepted_design(table, s_obs, acceptance)?;
    let positive = w.iter().filter(|v| **v > 0.0).count();
    // d + 1 points exactly identify intercept plus d slopes.
    if positive < table.stat_dim() + 1 {
        return Err(Error::invalid(format!(
            "linear fit needs at least d + 1 = {} accepted rows with positive weight, have {}",
            table.stat_dim() + 1,
            positive
        )));
    }
    let fit = weighted_least_squares(&x, &y, &w, ridge, "weighted linear adjustment").map_err(
        |e| match e {
            Error::Singular(_) => Error::Singular(
                "statistic covariance is singular; increase `keep` or use fewer statistics".into(),
            ),
            other => other,
        },
    )?;
    Ok(LinearFit {
        alpha: fit.intercept,
        beta: fit.coefs,
        ridge,
    })
}

/// Apply the linear adjustment `theta_i - beta' (s_i - s_obs)` to the
/// accepted rows. Weights carry through unchanged.
pub fn linear_adjust(
    table: &ReferenceTable,
    fit: &LinearFit,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
) -> Result<AdjustedSample> {
    let (x, y, w) = accepted_design(table, s_obs, acceptance)?;
    if fit.beta.nrows() != table.stat_dim() || fit.beta.ncols() != table.param_dim() {
        return Err(Error::invalid("linear fit does not match table dimensions"));
    }
    let values = &y - &x * &fit.beta;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear-adjusted sample".into()));
    }
    Ok(AdjustedSample {
        values,
        weights: w,
        source_rows: acceptance.accepted.clone(),
        adjustment: AdjustmentKind::Linear,
        replaced_params: Vec::new(),
        out_of_support: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Polynomial basis degree for the conditional mean and scale models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisDegree {
    Linear,
    Quadratic,
}

impl BasisDegree {
    fn size(self, d: usize) -> usize {
        match self {
            BasisDegree::Linear => d,
            BasisDegree::Quadratic => d + d * (d + 1) / 2,
        }
    }

    pub fn parse(v: u8) -> Result<Self> {
        match v {
            1 => Ok(BasisDegree::Linear),
            2 => Ok(BasisDegree::Quadratic),
            other => Err(Error::invalid(format!(
                "basis degree {other} not in {{1, 2}}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            BasisDegree::Linear => 1,
            BasisDegree::Quadratic => 2,
        }
    }
}

/// How the conditional scale is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleFit {
    /// Log-residual regression on the same basis as the mean.
    LogBasis,
    /// A single weighted residual scale per parameter; with a degree-1 mean
    /// this reduces the adjustment to the linear one.
    Constant,
}

#[derive(Debug, Clone)]
enum ScaleModel {
    Fitted(WlsFit),
    Constant(DVector<f64>),
}

/// Fitted conditional mean and diagonal conditional scale in `s`.
#[derive(Debug, Clone)]
pub struct ConditionalRegressor {
    s_obs: DVector<f64>,
    degree: BasisDegree,
    mean: WlsFit,
    scale: ScaleModel,
    /// Per-parameter lower bound on the fitted variance
    /// (`1e-12` × weighted response variance).
    variance_floor: DVector<f64>,
    pub warnings: Vec<String>,
}

impl ConditionalRegressor {
    /// A regressor with constant mean and scale functions; the adjustment it
    /// induces is the identity when the scale is shared.
    pub fn constant(s_obs: DVector<f64>, mu: DVector<f64>, sigma: DVector<f64>) -> Result<Self> {
        if sigma.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("constant scale must be positive"));
        }
        let p = mu.len();
        Ok(ConditionalRegressor {
            s_obs,
            degree: BasisDegree::Linear,
            mean: WlsFit {
                intercept: mu,
                coefs: DMatrix::zeros(0, p),
            },
            variance_floor: DVector::from_element(p, 0.0),
            scale: ScaleModel::Constant(sigma),
            warnings: Vec::new(),
        })
    }

    pub fn degree(&self) -> BasisDegree {
        self.degree
    }

    fn basis(&self, s: &DVector<f64>) -> DVector<f64> {
        let x = s - &self.s_obs;
        let d = x.len();
        if self.mean.coefs.nrows() == 0 {
            return DVector::zeros(0);
        }
        match self.degree {
            BasisDegree::Linear => x,
            BasisDegree::Quadratic => {
                let mut z = DVector::zeros(self.degree.size(d));
                for i in 0..d {
                    z[i] = x[i];
                }
                let mut idx = d;
                for a in 0..d {
                    for b in a..d {
                        z[idx] = x[a] * x[b];
                        idx += 1;
                    }
                }
                z
            }
        }
    }

    /// Conditional mean `mu(s)`.
    pub fn mean_at(&self, s: &DVector<f64>) -> DVector<f64> {
        self.mean.predict(&self.basis(s))
    }

    /// Conditional scale `sigma(s)` (diagonal), floored at the positivity
    /// floor. Returns the scales and whether any coordinate was floored.
    pub fn scale_at(&self, s: &DVector<f64>) -> (DVector<f64>, bool) {
        match &self.scale {
            ScaleModel::Constant(sigma) => (sigma.clone(), false),
            ScaleModel::Fitted(fit) => {
                let log_var = fit.predict(&self.basis(s));
                let mut floored = false;
                let sigma = DVector::from_fn(log_var.len(), |j, _| {
                    let var = log_var[j].exp();
                    if var < self.variance_floor[j] {
                        floored = true;
                        self.variance_floor[j].sqrt()
                    } else {
                        var.sqrt()
                    }
                });
                (sigma, floored)
            }
        }
    }
}

/// Fit the conditional mean and scale on the accepted rows.
///
/// The mean is a weighted polynomial regression of `theta` on the basis in
/// `s - s_obs`; the scale comes from regressing `log(residual^2 + floor)` on
/// the same basis (or a single weighted residual scale when
/// `scale = Constant`). A singular quadratic basis falls back to degree 1
/// with a warning recorded on the regressor.
pub fn fit_conditional(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
    degree: BasisDegree,
    scale: ScaleFit,
    ridge: f64,
) -> Result<ConditionalRegressor> {
    let (x, y, w) = accepted_design(table, s_obs, acceptance)?;
    let n_acc = x.nrows();
    let d = table.stat_dim();
    let p = table.param_dim();

    let mut degree = degree;
    if n_acc <= degree.size(d) + 2 {
        return Err(Error::invalid(format!(
            "conditional fit needs more than {} accepted rows, have {n_acc}",
            degree.size(d) + 2
        )));
    }

    let build_basis = |deg: BasisDegree| -> DMatrix<f64> {
        let k = deg.size(d);
        DMatrix::from_fn(n_acc, k, |i, c| {
            if c < d {
                x[(i, c)]
            } else {
                // Quadratic block: column index c - d walks (a, b), a <= b.
                let mut idx = c - d;
                let mut a = 0;
                while idx >= d - a {
                    idx -= d - a;
                    a += 1;
                }
                let b = a + idx;
                x[(i, a)] * x[(i, b)]
            }
        })
    };

    let mut warnings = Vec::new();
    let mut z = build_basis(degree);
    let mean = match weighted_least_squares(&z, &y, &w, ridge, "conditional mean") {
        Ok(fit) => fit,
        Err(Error::Singular(_)) if degree == BasisDegree::Quadratic => {
            warnings.push("quadratic basis singular; fell back to degree 1".to_string());
            degree = BasisDegree::Linear;
            z = build_basis(degree);
            weighted_least_squares(&z, &y, &w, ridge, "conditional mean (degree 1)")?
        }
        Err(e) => return Err(e),
    };

    // Weighted response variance sets the positivity floor for the scale.
    let w_sum = w.sum();
    let mut variance_floor = DVector::zeros(p);
    for j in 0..p {
        let mean_j = (0..n_acc).map(|i| w[i] * y[(i, j)]).sum::<f64>() / w_sum;
        let var_j = (0..n_acc)
            .map(|i| w[i] * (y[(i, j)] - mean_j).powi(2))
            .sum::<f64>()
            / w_sum;
        variance_floor[j] = 1e-12 * var_j;
    }

    // Squared residuals of the mean fit.
    let mut resid2 = DMatrix::zeros(n_acc, p);
    for i in 0..n_acc {
        let pred = mean.predict(&z.row(i).transpose());
        for j in 0..p {
            let r = y[(i, j)] - pred[j];
            resid2[(i, j)] = r * r;
        }
    }

    let scale_model = match scale {
        ScaleFit::Constant => {
            let sigma = DVector::from_fn(p, |j, _| {
                let mean_r2 = (0..n_acc).map(|i| w[i] * resid2[(i, j)]).sum::<f64>() / w_sum;
                mean_r2.max(variance_floor[j]).sqrt().max(f64::MIN_POSITIVE)
            });
            ScaleModel::Constant(sigma)
        }
        ScaleFit::LogBasis => {
            let log_r2 = DMatrix::from_fn(n_acc, p, |i, j| {
                (resid2[(i, j)] + variance_floor[j])
                    .max(f64::MIN_POSITIVE)
                    .ln()
            });
            let fit = weighted_least_squares(&z, &log_r2, &w, ridge, "conditional scale")?;
            ScaleModel::Fitted(fit)
        }
    };

    Ok(ConditionalRegressor {
        s_obs: s_obs.clone(),
        degree,
        mean,
        scale: scale_model,
        variance_floor,
        warnings,
    })
}

/// The heteroscedastic fit with its default log-basis scale model.
pub fn fit_heteroscedastic(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
    degree: BasisDegree,
    ridge: f64,
) -> Result<ConditionalRegressor> {
    fit_conditional(table, s_obs, acceptance, degree, ScaleFit::LogBasis, ridge)
}

/// Apply the heteroscedastic adjustment
/// `mu(s_obs) + sigma(s_obs) sigma(s_i)^-1 [theta_i - mu(s_i)]` row-wise.
///
/// If more than 1% of rows hit the scale floor a warning is recorded on the
/// output (the scale fit is unreliable there).
pub fn hetero_adjust(
    table: &ReferenceTable,
    reg: &ConditionalRegressor,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
) -> Result<AdjustedSample> {
    let rows = &acceptance.accepted;
    let p = table.param_dim();
    if s_obs.len() != table.stat_dim() {
        return Err(Error::invalid("s_obs dimension does not match table"));
    }
    let mu_obs = reg.mean_at(s_obs);
    let (sigma_obs, obs_floored) = reg.scale_at(s_obs);

    let mut values = DMatrix::zeros(rows.len(), p);
    let mut floored_rows = usize::from(obs_floored);
    for (i, &row) in rows.iter().enumerate() {
        let s_i = table.stat_row(row);
        let mu_i = reg.mean_at(&s_i);
        let (sigma_i, floored) = reg.scale_at(&s_i);
        if floored {
            floored_rows += 1;
        }
        for j in 0..p {
            let theta = table.params()[(row, j)];
            values[(i, j)] = mu_obs[j] + sigma_obs[j] / sigma_i[j] * (theta - mu_i[j]);
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("heteroscedastic-adjusted sample".into()));
    }
    let mut warnings = reg.warnings.clone();
    if floored_rows * 100 > rows.len() {
        warnings.push(format!(
            "conditional scale hit the variance floor on {floored_rows}/{} rows; \
             scale fit unreliable",
            rows.len()
        ));
    }
    Ok(AdjustedSample {
        values,
        weights: acceptance.accepted_weights(),
        source_rows: rows.clone(),
        adjustment: AdjustmentKind::Heteroscedastic,
        replaced_params: Vec::new(),
        out_of_support: Vec::new(),
        warnings,
    })
}

/// Options bundling the adjustment choice with its knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustmentOptions {
    pub kind: AdjustmentKind,
    pub ridge: f64,
    pub degree: BasisDegree,
}

impl Default for AdjustmentOptions {
    fn default() -> Self {
        AdjustmentOptions {
            kind: AdjustmentKind::Linear,
            ridge: DEFAULT_RIDGE,
            degree: BasisDegree::Quadratic,
        }
    }
}

/// Run the configured adjustment over an acceptance result.
pub fn run_adjustment(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    acceptance: &AcceptanceResult,
    options: &AdjustmentOptions,
) -> Result<AdjustedSample> {
    match options.kind {
        AdjustmentKind::Rejection => Ok(AdjustedSample::from_acceptance(table, acceptance)),
        AdjustmentKind::Linear => {
            let fit = fit_weighted_linear(table, s_obs, acceptance, options.ridge)?;
            linear_adjust(table, &fit, s_obs, acceptance)
        }
        AdjustmentKind::Heteroscedastic => {
            let reg = fit_heteroscedastic(table, s_obs, acceptance, options.degree, options.ridge)?;
            hetero_adjust(table, &reg, s_obs, acceptance)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accept::{accept_with_distances, AcceptanceResult, KernelKind};
    use crate::rng::row_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn full_acceptance(n: usize) -> AcceptanceResult {
        AcceptanceResult {
            distances: DVector::zeros(n),
            weights: DVector::from_element(n, 1.0),
            accepted: (0..n).collect(),
            epsilon: 0.0,
        }
    }

    fn table(params: DMatrix<f64>, stats: DMatrix<f64>) -> ReferenceTable {
        let pn = (1..=params.ncols()).map(|j| format!("t{j}")).collect();
        let sn = (1..=stats.ncols()).map(|j| format!("s{j}")).collect();
        ReferenceTable::from_parts(params, stats, 0, pn, sn).unwrap()
    }

    /// n rows of (theta, s) with s = theta + noise, theta ~ N(0, 1).
    fn gaussian_pair_table(n: usize, seed: u64) -> ReferenceTable {
        let mut rng = row_rng(seed, 0);
        let mut params = DMatrix::zeros(n, 1);
        let mut stats = DMatrix::zeros(n, 1);
        for i in 0..n {
            let t: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            params[(i, 0)] = t;
            stats[(i, 0)] = t + e;
        }
        table(params, stats)
    }

    #[test]
    fn two_point_closed_form() {
        // theta = (1, 3), s = (0, 2), s_obs = 1: slope 1, both rows adjust to 2.
        let t = table(
            DMatrix::from_column_slice(2, 1, &[1.0, 3.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 2.0]),
        );
        let s_obs = DVector::from_element(1, 1.0);
        let acc = full_acceptance(2);
        let fit = fit_weighted_linear(&t, &s_obs, &acc, 0.0).unwrap();
        assert!((fit.beta[(0, 0)] - 1.0).abs() < 1e-12);
        let adjusted = linear_adjust(&t, &fit, &s_obs, &acc).unwrap();
        assert!((adjusted.values[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((adjusted.values[(1, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_leave_fit_unchanged() {
        let t = gaussian_pair_table(64, 5);
        let s_obs = DVector::from_element(1, 0.3);
        let acc = full_acceptance(64);
        let fit = fit_weighted_linear(&t, &s_obs, &acc, 0.0).unwrap();

        let mut params2 = DMatrix::zeros(128, 1);
        let mut stats2 = DMatrix::zeros(128, 1);
        for i in 0..64 {
            for copy in 0..2 {
                params2[(2 * i + copy, 0)] = t.params()[(i, 0)];
                stats2[(2 * i + copy, 0)] = t.stats()[(i, 0)];
            }
        }
        let t2 = table(params2, stats2);
        let fit2 = fit_weighted_linear(&t2, &s_obs, &full_acceptance(128), 0.0).unwrap();
        assert!((fit.beta[(0, 0)] - fit2.beta[(0, 0)]).abs() < 1e-10);
        assert!((fit.alpha[0] - fit2.alpha[0]).abs() < 1e-10);
    }

    #[test]
    fn independent_response_gives_null_slope() {
        // theta independent of s: beta -> 0 within 3 Monte Carlo standard
        // errors; var(beta_hat) ~ var(theta) / (n var(s)).
        let n = 4_000;
        let mut rng = row_rng(9, 0);
        let mut params = DMatrix::zeros(n, 1);
        let mut stats = DMatrix::zeros(n, 1);
        for i in 0..n {
            params[(i, 0)] = StandardNormal.sample(&mut rng);
            stats[(i, 0)] = rng.random_range(-1.0..1.0);
        }
        let t = table(params, stats);
        let fit = fit_weighted_linear(&t, &DVector::zeros(1), &full_acceptance(n), 0.0).unwrap();
        let se = (1.0 / (n as f64 * (1.0 / 3.0))).sqrt();
        assert!(
            fit.beta[(0, 0)].abs() < 3.0 * se,
            "beta {}",
            fit.beta[(0, 0)]
        );
    }

    #[test]
    fn null_fit_is_identity_adjustment() {
        let t = gaussian_pair_table(32, 2);
        let acc = full_acceptance(32);
        let fit = LinearFit {
            alpha: DVector::zeros(1),
            beta: DMatrix::zeros(1, 1),
            ridge: 0.0,
        };
        let adjusted = linear_adjust(&t, &fit, &DVector::zeros(1), &acc).unwrap();
        assert_eq!(adjusted.values, *t.params());
    }

    #[test]
    fn rows_at_observation_do_not_move() {
        let t = gaussian_pair_table(32, 3);
        let acc = full_acceptance(32);
        let s_obs = DVector::from_element(1, t.stats()[(4, 0)]);
        let fit = fit_weighted_linear(&t, &s_obs, &acc, 0.0).unwrap();
        let adjusted = linear_adjust(&t, &fit, &s_obs, &acc).unwrap();
        assert!((adjusted.values[(4, 0)] - t.params()[(4, 0)]).abs() < 1e-12);
    }

    #[test]
    fn too_few_accepted_rows_rejected() {
        let t = gaussian_pair_table(32, 4);
        let acc = accept_with_distances(
            DVector::from_fn(32, |i, _| i as f64),
            1,
            KernelKind::Uniform,
        )
        .unwrap();
        assert!(fit_weighted_linear(&t, &DVector::zeros(1), &acc, 0.0).is_err());
    }

    #[test]
    fn constant_regressor_is_identity() {
        let t = gaussian_pair_table(32, 6);
        let acc = full_acceptance(32);
        // Zero mean: mu(s) + (theta - mu(s_i)) = theta bit-exactly.
        let reg = ConditionalRegressor::constant(
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::from_element(1, 2.0),
        )
        .unwrap();
        let adjusted = hetero_adjust(&t, &reg, &DVector::zeros(1), &acc).unwrap();
        assert_eq!(adjusted.values, *t.params());

        // Nonzero constant mean cancels up to round-off.
        let reg = ConditionalRegressor::constant(
            DVector::zeros(1),
            DVector::from_element(1, 0.7),
            DVector::from_element(1, 2.0),
        )
        .unwrap();
        let adjusted = hetero_adjust(&t, &reg, &DVector::zeros(1), &acc).unwrap();
        for i in 0..32 {
            assert!((adjusted.values[(i, 0)] - t.params()[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn doubled_scale_halves_residuals() {
        // sigma(s_i) = 2 sigma(s_obs) uniformly: residuals around mu halve.
        let t = table(
            DMatrix::from_column_slice(4, 1, &[1.0, 3.0, -1.0, 5.0]),
            DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]),
        );
        let acc = full_acceptance(4);
        // Scale model depends on s: log var = ln(4) at s = 1, ln(1) at s_obs = 0.
        let mut reg = ConditionalRegressor::constant(
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        reg.scale = ScaleModel::Fitted(WlsFit {
            intercept: DVector::zeros(1),
            coefs: DMatrix::from_element(1, 1, 4.0f64.ln()),
        });
        reg.mean = WlsFit {
            intercept: DVector::zeros(1),
            coefs: DMatrix::zeros(1, 1),
        };
        let adjusted = hetero_adjust(&t, &reg, &DVector::zeros(1), &acc).unwrap();
        for i in 0..4 {
            assert!((adjusted.values[(i, 0)] - t.params()[(i, 0)] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn homoscedastic_truth_gives_flat_scale() {
        // theta = 2 s + noise with constant noise: fitted sigma(s) varies
        // little across rows (coefficient of variation < 0.2).
        let n = 10_000;
        let mut rng = row_rng(10, 0);
        let mut params = DMatrix::zeros(n, 1);
        let mut stats = DMatrix::zeros(n, 1);
        for i in 0..n {
            let s: f64 = rng.random_range(-2.0..2.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            stats[(i, 0)] = s;
            params[(i, 0)] = 2.0 * s + 0.5 * e;
        }
        let t = table(params, stats);
        let acc = full_acceptance(n);
        let reg = fit_heteroscedastic(
            &t,
            &DVector::zeros(1),
            &acc,
            BasisDegree::Linear,
            DEFAULT_RIDGE,
        )
        .unwrap();
        let sigmas: Vec<f64> = (0..n).map(|i| reg.scale_at(&t.stat_row(i)).0[0]).collect();
        let mean = sigmas.iter().sum::<f64>() / n as f64;
        let sd = (sigmas.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        // The log-residual fit estimates a geometric mean, so the level is
        // biased low by a constant factor; only ratios enter the adjustment.
        assert!(sd / mean < 0.2, "cv = {}", sd / mean);
    }

    #[test]
    fn quadratic_truth_needs_degree_two() {
        // theta = s^2 + noise: degree-2 mean residual variance is strictly
        // smaller than degree-1.
        let n = 5_000;
        let mut rng = row_rng(11, 0);
        let mut params = DMatrix::zeros(n, 1);
        let mut stats = DMatrix::zeros(n, 1);
        for i in 0..n {
            let s: f64 = rng.random_range(-2.0..2.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            stats[(i, 0)] = s;
            params[(i, 0)] = s * s + 0.1 * e;
        }
        let t = table(params, stats);
        let acc = full_acceptance(n);
        let s_obs = DVector::zeros(1);
        let rss = |degree| {
            let reg = fit_conditional(&t, &s_obs, &acc, degree, ScaleFit::Constant, 0.0).unwrap();
            (0..n)
                .map(|i| (t.params()[(i, 0)] - reg.mean_at(&t.stat_row(i))[0]).powi(2))
                .sum::<f64>()
        };
        let rss1 = rss(BasisDegree::Linear);
        let rss2 = rss(BasisDegree::Quadratic);
        assert!(rss2 < 0.05 * rss1, "rss1 {rss1}, rss2 {rss2}");
    }

    #[test]
    fn degree_one_constant_scale_reduces_to_linear() {
        let n = 500;
        let mut rng = row_rng(12, 0);
        let mut params = DMatrix::zeros(n, 2);
        let mut stats = DMatrix::zeros(n, 2);
        for i in 0..n {
            for j in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                params[(i, j)] = StandardNormal.sample(&mut rng);
                stats[(i, j)] = params[(i, j)] + 0.5 * e;
            }
        }
        let t = table(params, stats);
        let s_obs = DVector::from_column_slice(&[0.2, -0.1]);
        let acc = accept_with_distances(
            DVector::from_fn(n, |i, _| (i % 97) as f64),
            300,
            KernelKind::Epanechnikov,
        )
        .unwrap();

        let fit = fit_weighted_linear(&t, &s_obs, &acc, DEFAULT_RIDGE).unwrap();
        let linear = linear_adjust(&t, &fit, &s_obs, &acc).unwrap();
        let reg = fit_conditional(
            &t,
            &s_obs,
            &acc,
            BasisDegree::Linear,
            ScaleFit::Constant,
            DEFAULT_RIDGE,
        )
        .unwrap();
        let hetero = hetero_adjust(&t, &reg, &s_obs, &acc).unwrap();

        let mut max_rel = 0.0f64;
        for i in 0..linear.values.nrows() {
            for j in 0..2 {
                let a = linear.values[(i, j)];
                let b = hetero.values[(i, j)];
                max_rel = max_rel.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        assert!(max_rel < 1e-8, "max relative difference {max_rel}");
    }

    #[test]
    fn out_of_support_rows_are_flagged_not_clipped() {
        let t = gaussian_pair_table(16, 13);
        let acc = full_acceptance(16);
        let mut sample = AdjustedSample::from_acceptance(&t, &acc);
        let lo = DVector::from_element(1, -0.5);
        let hi = DVector::from_element(1, 0.5);
        sample.flag_out_of_support(&lo, &hi);
        assert!(!sample.out_of_support.is_empty());
        for &i in &sample.out_of_support {
            assert!(sample.values[(i, 0)].abs() > 0.5);
        }
        // Values untouched.
        assert_eq!(sample.values, *t.params());
    }
}

//! Diagnostics: kernel density estimates, Monte Carlo Kullback–Leibler
//! divergence against an exact density, and distribution distance summaries.
//!
//! The KL estimator follows the benchmark protocol: draw from the exact
//! posterior, evaluate `log p - log q_hat` at those draws where `q_hat` is a
//! product-Gaussian KDE of the ABC sample on the first one or two parameter
//! coordinates, and report the Monte Carlo mean with its standard error.
//! Bandwidths use Silverman's rule with the robust spread estimate
//! `min(sd, IQR/1.349)`, chosen for determinism.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::blin::BayesLinearSummary;
use crate::error::{Error, Result};
use crate::regress::AdjustedSample;

const LN_2PI: f64 = 1.8378770664093453;

/// KDE densities below this floor are clamped in the KL sum; hits are
/// counted and reported.
pub const KDE_DENSITY_FLOOR: f64 = 1e-300;

/// Silverman bandwidth `1.06 * spread * m^(-1/5)` with
/// `spread = min(sd, IQR/1.349)`; a zero IQR falls back to the sd alone.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::invalid("bandwidth needs at least two points"));
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        // Linear interpolation between order statistics.
        let h = p * (m as f64 - 1.0);
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    if spread <= 0.0 {
        return Err(Error::Numerical(
            "sample has zero spread; kernel density estimate is degenerate".into(),
        ));
    }
    Ok(1.06 * spread * (m as f64).powf(-0.2))
}

/// Product-Gaussian kernel density estimate in one or two dimensions.
#[derive(Debug, Clone)]
pub struct KdeModel {
    points: DMatrix<f64>,
    bandwidths: DVector<f64>,
    log_norm: f64,
}

/// Fit per-dimension Silverman bandwidths over the sample points (m × k,
/// k = 1 or 2).
pub fn fit_kde(points: &DMatrix<f64>) -> Result<KdeModel> {
    let m = points.nrows();
    let k = points.ncols();
    if m < 2 {
        return Err(Error::invalid(
            "kernel density estimate needs at least two points",
        ));
    }
    if !(k == 1 || k == 2) {
        return Err(Error::invalid(
            "kernel density estimate supports one or two dimensions",
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kde sample".into()));
    }
    let mut bandwidths = DVector::zeros(k);
    for j in 0..k {
        let col: Vec<f64> = points.column(j).iter().copied().collect();
        bandwidths[j] = silverman_bandwidth(&col)?;
    }
    let log_norm =
        -(m as f64).ln() - 0.5 * k as f64 * LN_2PI - bandwidths.iter().map(|h| h.ln()).sum::<f64>();
    Ok(KdeModel {
        points: points.clone(),
        bandwidths,
        log_norm,
    })
}

impl KdeModel {
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn bandwidths(&self) -> &DVector<f64> {
        &self.bandwidths
    }

    /// Density at `x`; zero may underflow to exactly 0.0 far from the data.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Log density at `x` (`-inf` on total underflow).
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "kde log_pdf: wrong dimension");
        let mut sum = 0.0;
        for i in 0..self.points.nrows() {
            let mut q = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                let u = (xj - self.points[(i, j)]) / self.bandwidths[j];
                q += u * u;
            }
            sum += (-0.5 * q).exp();
        }
        sum.ln() + self.log_norm
    }
}

/// A Monte Carlo KL divergence estimate with its sampling error.
#[derive(Debug, Clone)]
pub struct KlReport {
    pub estimate: f64,
    pub std_error: f64,
    /// Number of oracle draws averaged over.
    pub n_oracle: usize,
    /// Dimensions compared (1 or 2).
    pub dims: usize,
    /// How many oracle draws hit the KDE density floor.
    pub floor_hits: usize,
}

/// Estimate `KL(p || q_hat)` where `p` is known through `oracle_log_pdf` and
/// draws from it, and `q_hat` is the KDE of `abc_sample`.
///
/// The estimate is `mean_k [log p(x_k) - log q_hat(x_k)]` over the oracle
/// draws; the KDE density is floored at `1e-300` with floor hits counted.
pub fn kl_divergence<F>(
    oracle_draws: &DMatrix<f64>,
    oracle_log_pdf: F,
    abc_sample: &DMatrix<f64>,
) -> Result<KlReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = oracle_draws.nrows();
    let k = oracle_draws.ncols();
    if m < 2 {
        return Err(Error::invalid(
            "kl_divergence needs at least two oracle draws",
        ));
    }
    if abc_sample.ncols() != k {
        return Err(Error::invalid(format!(
            "dimension mismatch: oracle draws are {k}-dimensional, sample is {}-dimensional",
            abc_sample.ncols()
        )));
    }
    let kde = fit_kde(abc_sample)?;
    let log_floor = KDE_DENSITY_FLOOR.ln();

    let terms: Vec<(f64, bool)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = oracle_draws.row(i).iter().copied().collect();
            let log_p = oracle_log_pdf(&x);
            let log_q = kde.log_pdf(&x);
            if log_q < log_floor {
                (log_p - log_floor, true)
            } else {
                (log_p - log_q, false)
            }
        })
        .collect();

    let floor_hits = terms.iter().filter(|(_, hit)| *hit).count();
    if terms.iter().any(|(t, _)| !t.is_finite()) {
        return Err(Error::Numerical(
            "non-finite Kullback-Leibler term after flooring".into(),
        ));
    }
    let estimate = terms.iter().map(|(t, _)| t).sum::<f64>() / m as f64;
    let var = terms
        .iter()
        .map(|(t, _)| (t - estimate).powi(2))
        .sum::<f64>()
        / (m as f64 - 1.0);
    Ok(KlReport {
        estimate,
        std_error: (var / m as f64).sqrt(),
        n_oracle: m,
        dims: k,
        floor_hits,
    })
}

/// Two-sample Kolmogorov–Smirnov distance (sup-norm between empirical
/// distribution functions).
pub fn ks_distance(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::invalid("ks_distance requires nonempty samples"));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Consume all points tied at the next value before comparing EDFs.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Kolmogorov–Smirnov distance of a sample against an exact distribution
/// function.
pub fn ks_distance_cdf<F>(sample: &[f64], cdf: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if sample.is_empty() {
        return Err(Error::invalid("ks_distance requires a nonempty sample"));
    }
    let mut a = sample.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, x) in a.iter().enumerate() {
        let c = cdf(*x);
        sup = sup.max((c - i as f64 / n).abs());
        sup = sup.max(((i + 1) as f64 / n - c).abs());
    }
    Ok(sup)
}

/// Componentwise comparison of a sample's first two moments against
/// reference moments.
#[derive(Debug, Clone)]
pub struct MomentReport {
    /// Sample mean minus reference mean, per parameter.
    pub mean_diff: DVector<f64>,
    /// Sample standard deviation minus reference, per parameter.
    pub sd_diff: DVector<f64>,
    /// Largest absolute entry of the two difference vectors.
    pub max_abs_diff: f64,
    /// Norm-relative error: max of |mean error| / |ref mean| and
    /// Frobenius |cov error| / |ref cov|.
    pub max_rel_diff: f64,
}

/// Compare sample moments against explicit reference moments.
pub fn moment_report(
    sample: &AdjustedSample,
    ref_mean: &DVector<f64>,
    ref_var: &DMatrix<f64>,
) -> Result<MomentReport> {
    let p = sample.param_dim();
    if ref_mean.len() != p || ref_var.nrows() != p || ref_var.ncols() != p {
        return Err(Error::invalid(
            "moment_report: reference dimensions disagree",
        ));
    }
    let mean = sample.mean();
    let cov = sample.covariance();
    let mean_diff = &mean - ref_mean;
    let sd_diff = DVector::from_fn(p, |j, _| cov[(j, j)].sqrt() - ref_var[(j, j)].sqrt());
    let max_abs_diff = mean_diff
        .iter()
        .chain(sd_diff.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let rel_mean = mean_diff.norm() / ref_mean.norm().max(f64::MIN_POSITIVE);
    let rel_var = (&cov - ref_var).norm() / ref_var.norm().max(f64::MIN_POSITIVE);
    Ok(MomentReport {
        mean_diff,
        sd_diff,
        max_abs_diff,
        max_rel_diff: rel_mean.max(rel_var),
    })
}

/// Compare sample moments against a Bayes linear summary.
pub fn moment_report_vs_summary(
    sample: &AdjustedSample,
    summary: &BayesLinearSummary,
) -> Result<MomentReport> {
    moment_report(sample, &summary.adjusted_mean, &summary.adjusted_var)
}

//! Gaussian-mixture benchmark with exact likelihood and exact posterior.
//!
//! The statistic vector given a `p`-dimensional parameter is a `2^p`-component
//! Gaussian mixture: each coordinate of the component mean is `+theta_i` with
//! probability `omega` and `-theta_i` with probability `1 - omega`, and the
//! covariance is the equicorrelation matrix with unit diagonal and
//! off-diagonal `rho`. Its one-dimensional margins are the two-component
//! mixture
//!
//! ```text
//! p(s_i | theta_i) = (1 - omega) N(s_i; -theta_i, 1) + omega N(s_i; theta_i, 1)
//! ```
//!
//! Because flipping signs of coordinates maps Gaussians to Gaussians,
//!
//! ```text
//! N(s; D theta, Sigma) = N(theta; D s, D Sigma D),   D = diag(+-1),
//! ```
//!
//! the posterior under a uniform box prior is itself an explicit Gaussian
//! mixture restricted to the box. That makes three exact references available
//! for testing the ABC machinery: the likelihood (2^p-term enumeration), a
//! posterior sampler (mixture component choice plus rejection against the
//! box), and a grid-normalised posterior density on the first one or two
//! coordinates.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::Simulator;

const LN_2PI: f64 = 1.8378770664093453;

/// Enumerating 2^p mixture components is capped here.
const MAX_ENUM_DIM: usize = 20;

/// Monte Carlo sample size for truncation masses when `rho != 0`.
const MASS_MC_DRAWS: usize = 10_000;

/// Rejection sampling against the prior box aborts below this acceptance rate.
const MIN_ACCEPT_RATE: f64 = 1e-3;

/// The `2^p`-component Gaussian mixture simulator on a box prior.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    p: usize,
    omega: f64,
    rho: f64,
    prior_lo: f64,
    prior_hi: f64,
    /// Lower Cholesky factor of the equicorrelation covariance.
    chol_l: DMatrix<f64>,
    log_det: f64,
}

impl MixtureModel {
    pub fn new(p: usize, omega: f64, rho: f64, prior_lo: f64, prior_hi: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("mixture model requires p >= 1"));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::invalid(format!("omega = {omega} outside [0, 1]")));
        }
        if !prior_lo.is_finite() || !prior_hi.is_finite() || prior_lo >= prior_hi {
            return Err(Error::invalid("mixture model requires prior_lo < prior_hi"));
        }
        let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
        let chol = Cholesky::new(sigma).ok_or_else(|| {
            Error::invalid(format!(
                "equicorrelation covariance not positive definite at rho = {rho}, p = {p}"
            ))
        })?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            p,
            omega,
            rho,
            prior_lo,
            prior_hi,
            chol_l,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn prior_bounds(&self) -> (f64, f64) {
        (self.prior_lo, self.prior_hi)
    }

    /// The same mixture on the first `k` coordinates. Dropping coordinates of
    /// a sign-flip component drops the matching mean/covariance entries, so
    /// the `k`-dimensional margin of the statistic model (and of the
    /// untruncated posterior) is exactly the `k`-dimensional model.
    pub fn collapse(&self, k: usize) -> Result<MixtureModel> {
        if k == 0 || k > self.p {
            return Err(Error::invalid(format!(
                "cannot collapse p = {} onto k = {k}",
                self.p
            )));
        }
        MixtureModel::new(k, self.omega, self.rho, self.prior_lo, self.prior_hi)
    }

    /// Mixture weight of the component selected by `mask` (bit i = b_i).
    fn component_weight(&self, mask: u32) -> f64 {
        let mut w = 1.0;
        for i in 0..self.p {
            w *= if mask >> i & 1 == 0 {
                self.omega
            } else {
                1.0 - self.omega
            };
        }
        w
    }

    /// Component mean for parameter `theta`: coordinate i is
    /// `(1 - 2 b_i) theta_i`.
    fn component_mean(&self, theta: &DVector<f64>, mask: u32) -> DVector<f64> {
        DVector::from_fn(self.p, |i, _| {
            if mask >> i & 1 == 0 {
                theta[i]
            } else {
                -theta[i]
            }
        })
    }

    /// Log density of `N(mean, Sigma)` at `x` using the precomputed factor.
    fn log_normal(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let diff = x - mean;
        let y = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("cholesky factor is nonsingular");
        -0.5 * (self.p as f64 * LN_2PI + self.log_det + y.norm_squared())
    }

    /// One statistic draw: choose signs, then add correlated Gaussian noise.
    pub fn draw_statistics(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        let mut mean = DVector::zeros(self.p);
        for i in 0..self.p {
            let flip = rng.random_bool(1.0 - self.omega);
            mean[i] = if flip { -theta[i] } else { theta[i] };
        }
        let z = DVector::from_fn(self.p, |_, _| StandardNormal.sample(rng));
        mean + &self.chol_l * z
    }

    /// Exact log-likelihood by enumeration of all `2^p` components,
    /// stabilised with log-sum-exp.
    pub fn log_likelihood(&self, theta: &DVector<f64>, s: &DVector<f64>) -> Result<f64> {
        if self.p > MAX_ENUM_DIM {
            return Err(Error::invalid(format!(
                "exact likelihood enumerates 2^p components; p = {} exceeds {MAX_ENUM_DIM}",
                self.p
            )));
        }
        if theta.len() != self.p || s.len() != self.p {
            return Err(Error::invalid("log_likelihood: dimension mismatch"));
        }
        let mut terms = Vec::with_capacity(1 << self.p);
        for mask in 0..(1u32 << self.p) {
            let w = self.component_weight(mask);
            if w == 0.0 {
                continue;
            }
            let mean = self.component_mean(theta, mask);
            terms.push(w.ln() + self.log_normal(s, &mean));
        }
        Ok(log_sum_exp(&terms))
    }

    /// Draws from the posterior `p(theta | s_obs)` under the uniform box
    /// prior, as an `m x p` matrix.
    ///
    /// By the sign-flip identity each likelihood component is a Gaussian in
    /// `theta` with mean `D_b s_obs` and covariance `D_b Sigma D_b`, so a
    /// posterior draw is a component pick (weight = prior component
    /// probability x box truncation mass) followed by a truncated-normal draw
    /// via rejection against the box. Truncation masses come from univariate
    /// box probabilities when `rho = 0` and Monte Carlo otherwise.
    pub fn exact_posterior_sample(
        &self,
        s_obs: &DVector<f64>,
        m: usize,
        rng: &mut dyn RngCore,
    ) -> Result<DMatrix<f64>> {
        if self.p > MAX_ENUM_DIM {
            return Err(Error::invalid(format!(
                "exact posterior enumerates 2^p components; p = {} exceeds {MAX_ENUM_DIM}",
                self.p
            )));
        }
        if s_obs.len() != self.p {
            return Err(Error::invalid(
                "exact_posterior_sample: s_obs dimension mismatch",
            ));
        }
        if m == 0 {
            return Err(Error::invalid("exact_posterior_sample: m must be positive"));
        }

        let n_comp = 1usize << self.p;
        let masses = self.truncation_masses(s_obs, rng);
        let mut weights = Vec::with_capacity(n_comp);
        for mask in 0..n_comp as u32 {
            weights.push(self.component_weight(mask) * masses[mask as usize]);
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Numerical(
                "every posterior component has zero mass on the prior box".into(),
            ));
        }
        let picker = WeightedIndex::new(&weights)
            .map_err(|e| Error::Numerical(format!("component weights: {e}")))?;

        let mut out = DMatrix::zeros(m, self.p);
        let mut trials: u64 = 0;
        let mut accepts: u64 = 0;
        for row in 0..m {
            let mask = picker.sample(rng) as u32;
            loop {
                trials += 1;
                let z = DVector::from_fn(self.p, |_, _| StandardNormal.sample(rng));
                let mut theta = s_obs + &self.chol_l * z;
                // Apply D_b: theta = D_b (s + L z).
                for i in 0..self.p {
                    if mask >> i & 1 == 1 {
                        theta[i] = -theta[i];
                    }
                }
                if theta
                    .iter()
                    .all(|v| (self.prior_lo..=self.prior_hi).contains(v))
                {
                    accepts += 1;
                    out.row_mut(row).copy_from(&theta.transpose());
                    break;
                }
                if trials >= 1_000 && (accepts as f64) < MIN_ACCEPT_RATE * trials as f64 {
                    return Err(Error::Numerical(format!(
                        "truncated-normal rejection acceptance rate below {MIN_ACCEPT_RATE} \
                         ({accepts}/{trials}); posterior mass barely overlaps the prior box"
                    )));
                }
            }
        }
        Ok(out)
    }

    /// Per-component probability that a draw lands inside the prior box.
    fn truncation_masses(&self, s_obs: &DVector<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        let n_comp = 1usize << self.p;
        let std_normal = Normal::standard();
        if self.rho == 0.0 {
            // Independent coordinates: product of univariate box masses.
            (0..n_comp as u32)
                .map(|mask| {
                    let mean = self.component_mean(s_obs, mask);
                    (0..self.p)
                        .map(|i| {
                            std_normal.cdf(self.prior_hi - mean[i])
                                - std_normal.cdf(self.prior_lo - mean[i])
                        })
                        .product()
                })
                .collect()
        } else {
            // Shared noise draws across components: z once, signs per mask.
            let mut hits = vec![0u64; n_comp];
            for _ in 0..MASS_MC_DRAWS {
                let z = DVector::from_fn(self.p, |_, _| StandardNormal.sample(rng));
                let base = s_obs + &self.chol_l * z;
                for mask in 0..n_comp as u32 {
                    let inside = (0..self.p).all(|i| {
                        let v = if mask >> i & 1 == 0 {
                            base[i]
                        } else {
                            -base[i]
                        };
                        (self.prior_lo..=self.prior_hi).contains(&v)
                    });
                    if inside {
                        hits[mask as usize] += 1;
                    }
                }
            }
            hits.iter()
                .map(|h| *h as f64 / MASS_MC_DRAWS as f64)
                .collect()
        }
    }

    /// Grid-normalised exact posterior density on the first `k` coordinates
    /// (`k` = 1 or 2), the reference for divergence diagnostics.
    pub fn posterior_oracle(
        &self,
        s_obs: &DVector<f64>,
        k: usize,
    ) -> Result<MixturePosteriorOracle> {
        MixturePosteriorOracle::new(self, s_obs, k)
    }

    /// Posterior mean and variance of the scalar parameter given scalar `s`,
    /// by composite-midpoint integration of the exact one-dimensional
    /// posterior over the prior box. Only defined for `p = 1`.
    pub fn posterior_moments_1d(&self, s: f64, grid: usize) -> Result<(f64, f64)> {
        if self.p != 1 {
            return Err(Error::invalid(
                "posterior_moments_1d is defined for the p = 1 model only",
            ));
        }
        if grid < 10 {
            return Err(Error::invalid("posterior_moments_1d: grid too coarse"));
        }
        let h = (self.prior_hi - self.prior_lo) / grid as f64;
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for j in 0..grid {
            let theta = self.prior_lo + (j as f64 + 0.5) * h;
            let dens = marginal_density(theta, s, self.omega);
            m0 += dens;
            m1 += dens * theta;
            m2 += dens * theta * theta;
        }
        if m0.is_nan() || m0 <= 0.0 {
            return Err(Error::Numerical(format!(
                "posterior mass underflows on the prior box at s = {s}"
            )));
        }
        let mean = m1 / m0;
        Ok((mean, m2 / m0 - mean * mean))
    }
}

impl Simulator for MixtureModel {
    fn id(&self) -> String {
        format!(
            "mixture(p={},omega={},rho={})",
            self.p, self.omega, self.rho
        )
    }

    fn param_dim(&self) -> usize {
        self.p
    }

    fn stat_dim(&self) -> usize {
        self.p
    }

    fn draw(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        if theta.len() != self.p {
            return Err(Error::invalid("mixture draw: theta dimension mismatch"));
        }
        Ok(self.draw_statistics(theta, rng))
    }

    fn log_likelihood(&self, theta: &DVector<f64>, s: &DVector<f64>) -> Option<f64> {
        MixtureModel::log_likelihood(self, theta, s).ok()
    }
}

/// The univariate statistic margin: a two-component normal mixture density,
/// `(1 - omega) N(s; -theta, 1) + omega N(s; theta, 1)`.
pub fn marginal_density(theta_i: f64, s_i: f64, omega: f64) -> f64 {
    (1.0 - omega) * normal_pdf(s_i, -theta_i) + omega * normal_pdf(s_i, theta_i)
}

fn normal_pdf(x: f64, mean: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Exact posterior density of the first `k` coordinates (`k` = 1 or 2) given
/// `s_obs`, normalised numerically over the prior box.
///
/// Marginalising the sign-flip mixture onto leading coordinates just drops
/// the trailing mean/covariance entries, so the unnormalised density has
/// `2^k` Gaussian components; the box normalisation constant is computed by
/// composite midpoint quadrature on a 400-per-axis grid.
pub struct MixturePosteriorOracle {
    k: usize,
    /// (weight, mean, covariance Cholesky, log det) per component.
    components: Vec<(f64, DVector<f64>, DMatrix<f64>, f64)>,
    log_norm: f64,
    lo: f64,
    hi: f64,
}

/// Grid resolution per axis for the box normalisation.
const ORACLE_GRID: usize = 400;

impl MixturePosteriorOracle {
    fn new(model: &MixtureModel, s_obs: &DVector<f64>, k: usize) -> Result<Self> {
        if !(k == 1 || k == 2) {
            return Err(Error::invalid(
                "posterior oracle supports one or two coordinates",
            ));
        }
        if k > model.p || s_obs.len() != model.p {
            return Err(Error::invalid("posterior oracle: dimension mismatch"));
        }
        let collapsed = model.collapse(k)?;
        let mut components = Vec::with_capacity(1 << k);
        for mask in 0..(1u32 << k) {
            let w = collapsed.component_weight(mask);
            if w == 0.0 {
                continue;
            }
            let mean = DVector::from_fn(k, |i, _| {
                if mask >> i & 1 == 0 {
                    s_obs[i]
                } else {
                    -s_obs[i]
                }
            });
            // D_b Sigma D_b: flip the off-diagonal sign when signs differ.
            let sigma = DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    1.0
                } else {
                    let si = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                    let sj = if mask >> j & 1 == 0 { 1.0 } else { -1.0 };
                    si * sj * collapsed.rho
                }
            });
            let chol = Cholesky::new(sigma)
                .ok_or_else(|| Error::Numerical("oracle component covariance not PD".into()))?;
            let l = chol.l();
            let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            components.push((w, mean, l, log_det));
        }

        let mut oracle = Self {
            k,
            components,
            log_norm: 0.0,
            lo: model.prior_lo,
            hi: model.prior_hi,
        };
        let h = (oracle.hi - oracle.lo) / ORACLE_GRID as f64;
        let mut mass = 0.0;
        if k == 1 {
            for i in 0..ORACLE_GRID {
                let t = oracle.lo + (i as f64 + 0.5) * h;
                mass += oracle.unnormalized(&[t]).exp();
            }
            mass *= h;
        } else {
            for i in 0..ORACLE_GRID {
                let t1 = oracle.lo + (i as f64 + 0.5) * h;
                for j in 0..ORACLE_GRID {
                    let t2 = oracle.lo + (j as f64 + 0.5) * h;
                    mass += oracle.unnormalized(&[t1, t2]).exp();
                }
            }
            mass *= h * h;
        }
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::Numerical(
                "posterior oracle mass underflows on the prior box".into(),
            ));
        }
        oracle.log_norm = mass.ln();
        Ok(oracle)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    fn unnormalized(&self, theta: &[f64]) -> f64 {
        let x = DVector::from_column_slice(theta);
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|(w, mean, l, log_det)| {
                let diff = &x - mean;
                let y = l
                    .solve_lower_triangular(&diff)
                    .expect("component factor is nonsingular");
                w.ln() - 0.5 * (self.k as f64 * LN_2PI + log_det + y.norm_squared())
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Normalised log density at `theta` (length `k`); `-inf` off the box.
    pub fn log_pdf(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.k, "oracle log_pdf: wrong dimension");
        if theta.iter().any(|v| !(self.lo..=self.hi).contains(v)) {
            return f64::NEG_INFINITY;
        }
        self.unnormalized(theta) - self.log_norm
    }
}

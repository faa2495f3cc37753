//! Simulator and prior interfaces plus the built-in models.
//!
//! A model is a pair (prior, simulator). The simulator draws a vector of
//! summary statistics given a parameter vector; it may optionally expose an
//! exact log-likelihood, which only benchmark models do. Models are looked up
//! by string id so a run configuration can name them.

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};

pub mod conjugate;
pub mod external;
pub mod mixture;
pub mod priors;

pub use conjugate::ConjugateGaussian;
pub use external::ExternalSimulator;
pub use mixture::{MixtureModel, MixturePosteriorOracle};
pub use priors::{GaussianPrior, PointMassPrior, UniformBoxPrior};

/// A stochastic forward model mapping parameters to summary statistics.
pub trait Simulator: Send + Sync {
    /// Stable identifier recorded in table metadata.
    fn id(&self) -> String;

    /// Parameter dimension `p`.
    fn param_dim(&self) -> usize;

    /// Statistic dimension `d`.
    fn stat_dim(&self) -> usize;

    /// One draw `s ~ p(s | theta)`.
    fn draw(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>>;

    /// Exact log-likelihood where available (benchmark models only).
    fn log_likelihood(&self, _theta: &DVector<f64>, _s: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// A prior distribution over the parameter vector.
pub trait Prior: Send + Sync {
    fn dim(&self) -> usize;

    fn draw(&self, rng: &mut dyn RngCore) -> DVector<f64>;

    /// Support box, if the prior has one; used to flag out-of-support draws.
    fn support(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }
}

/// A prior/simulator pair ready to feed the table builder.
pub struct Model {
    pub prior: Box<dyn Prior>,
    pub simulator: Box<dyn Simulator>,
}

/// Declarative model selection, keyed by the `id` tag.
///
/// `mixture` is the Gaussian-mixture benchmark, `conjugate_gaussian` the
/// analytically tractable toy `theta ~ N(0,1)^p`, `s = theta + N(0,1)^p`,
/// and `external` wraps a user executable speaking the line protocol of
/// [`ExternalSimulator`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Mixture {
        p: usize,
        omega: f64,
        rho: f64,
        prior_lo: f64,
        prior_hi: f64,
    },
    ConjugateGaussian {
        p: usize,
    },
    External {
        command: String,
        param_dim: usize,
        stat_dim: usize,
        prior_lo: f64,
        prior_hi: f64,
    },
}

impl ModelSpec {
    /// The standard benchmark configuration: `omega = 0.3`, `rho = 0.7`,
    /// uniform prior on `[-20, 40]^p`.
    pub fn mixture_benchmark(p: usize) -> Self {
        ModelSpec::Mixture {
            p,
            omega: 0.3,
            rho: 0.7,
            prior_lo: -20.0,
            prior_hi: 40.0,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::Mixture { .. } => "mixture",
            ModelSpec::ConjugateGaussian { .. } => "conjugate_gaussian",
            ModelSpec::External { .. } => "external",
        }
    }

    /// Instantiate the prior and simulator.
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelSpec::Mixture {
                p,
                omega,
                rho,
                prior_lo,
                prior_hi,
            } => {
                let model = MixtureModel::new(*p, *omega, *rho, *prior_lo, *prior_hi)?;
                let prior = UniformBoxPrior::new(
                    DVector::from_element(*p, *prior_lo),
                    DVector::from_element(*p, *prior_hi),
                )?;
                Ok(Model {
                    prior: Box::new(prior),
                    simulator: Box::new(model),
                })
            }
            ModelSpec::ConjugateGaussian { p } => {
                if *p == 0 {
                    return Err(Error::invalid("conjugate_gaussian requires p >= 1"));
                }
                Ok(Model {
                    prior: Box::new(GaussianPrior::standard(*p)),
                    simulator: Box::new(ConjugateGaussian::new(*p)),
                })
            }
            ModelSpec::External {
                command,
                param_dim,
                stat_dim,
                prior_lo,
                prior_hi,
            } => {
                let prior = UniformBoxPrior::new(
                    DVector::from_element(*param_dim, *prior_lo),
                    DVector::from_element(*param_dim, *prior_hi),
                )?;
                Ok(Model {
                    prior: Box::new(prior),
                    simulator: Box::new(ExternalSimulator::new(
                        command.clone(),
                        *param_dim,
                        *stat_dim,
                    )),
                })
            }
        }
    }
}

//! Conjugate Gaussian toy: `theta ~ N(0, I)`, `s = theta + N(0, I)`.
//!
//! Everything is available in closed form — posterior mean `s/2`, posterior
//! variance `1/2` per coordinate — which makes this the reference model for
//! checking Bayes linear estimates against known answers.

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::Simulator;

#[derive(Debug, Clone)]
pub struct ConjugateGaussian {
    dim: usize,
}

impl ConjugateGaussian {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Simulator for ConjugateGaussian {
    fn id(&self) -> String {
        format!("conjugate_gaussian(p={})", self.dim)
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn stat_dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, theta: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        if theta.len() != self.dim {
            return Err(Error::invalid("conjugate draw: theta dimension mismatch"));
        }
        Ok(DVector::from_fn(self.dim, |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            theta[i] + z
        }))
    }

    fn log_likelihood(&self, theta: &DVector<f64>, s: &DVector<f64>) -> Option<f64> {
        if theta.len() != self.dim || s.len() != self.dim {
            return None;
        }
        let ln_2pi = 1.8378770664093453;
        Some(-0.5 * ((s - theta).norm_squared() + self.dim as f64 * ln_2pi))
    }
}

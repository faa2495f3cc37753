//! Stock priors: uniform box, independent Gaussian, and a point mass.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::Prior;

/// Uniform prior on the box `[lo, hi]` componentwise.
#[derive(Debug, Clone)]
pub struct UniformBoxPrior {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl UniformBoxPrior {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid("box bounds have different lengths"));
        }
        if lo
            .iter()
            .zip(hi.iter())
            .any(|(l, h)| !l.is_finite() || !h.is_finite() || l >= h)
        {
            return Err(Error::invalid(
                "box prior requires lo < hi in every coordinate",
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn bounds(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.lo, &self.hi)
    }
}

impl Prior for UniformBoxPrior {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_fn(self.lo.len(), |i, _| {
            rng.random_range(self.lo[i]..self.hi[i])
        })
    }

    fn support(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((self.lo.clone(), self.hi.clone()))
    }
}

/// Independent Gaussian prior `N(mean_i, sd_i^2)` per coordinate.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    sd: DVector<f64>,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, sd: DVector<f64>) -> Result<Self> {
        if mean.len() != sd.len() {
            return Err(Error::invalid("mean and sd have different lengths"));
        }
        if sd.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("gaussian prior requires sd > 0"));
        }
        Ok(Self { mean, sd })
    }

    /// `N(0, 1)` in every coordinate.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            sd: DVector::from_element(dim, 1.0),
        }
    }
}

impl Prior for GaussianPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_fn(self.mean.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            self.mean[i] + self.sd[i] * z
        })
    }
}

/// Degenerate prior concentrated at a single point; test scaffolding.
#[derive(Debug, Clone)]
pub struct PointMassPrior(pub DVector<f64>);

impl Prior for PointMassPrior {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn draw(&self, _rng: &mut dyn RngCore) -> DVector<f64> {
        self.0.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::row_rng;

    #[test]
    fn box_prior_stays_in_bounds() {
        let prior = UniformBoxPrior::new(
            DVector::from_element(3, -2.0),
            DVector::from_element(3, 5.0),
        )
        .unwrap();
        let mut rng = row_rng(1, 0);
        for _ in 0..100 {
            let x = prior.draw(&mut rng);
            assert!(x.iter().all(|v| (-2.0..5.0).contains(v)));
        }
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let lo = DVector::from_element(1, 1.0);
        let hi = DVector::from_element(1, 1.0);
        assert!(UniformBoxPrior::new(lo, hi).is_err());
    }
}

//! Distance computation, kernel weighting and acceptance-threshold selection.
//!
//! Distances are scaled Euclidean: each statistic column is divided by a
//! robust per-column scale (median absolute deviation, falling back to the
//! standard deviation, then to 1 for constant columns) so that acceptance is
//! invariant under rescaling any statistic. The bandwidth is chosen by a
//! nearest-`keep` rule: the threshold is the `keep`-th smallest distance,
//! with boundary ties broken by original row index so exactly `keep` rows
//! are accepted.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::table::ReferenceTable;

/// Per-statistic positive scale factors dividing each column.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceScale(DVector<f64>);

impl DistanceScale {
    pub fn new(factors: DVector<f64>) -> Result<Self> {
        if factors.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("scale factors must be positive and finite"));
        }
        Ok(Self(factors))
    }

    pub fn factors(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }
}

/// Smoothing kernel shapes for acceptance weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Indicator of `d <= eps`; the default, matching plain rejection.
    Uniform,
    /// `(1 - (d/eps)^2)` on `d <= eps`.
    Epanechnikov,
    /// `exp(-(d/eps)^2 / 2)`, positive everywhere.
    Gaussian,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Uniform => "uniform",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KernelKind::Uniform),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "gaussian" => Ok(KernelKind::Gaussian),
            other => Err(Error::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

/// A kernel shape with its bandwidth. Weights are unnormalised; only ratios
/// matter downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub epsilon: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid(format!(
                "kernel bandwidth {epsilon} must be positive"
            )));
        }
        Ok(Self { kind, epsilon })
    }

    /// Unnormalised weight at distance `d >= 0`.
    pub fn weight(&self, d: f64) -> f64 {
        let u = d / self.epsilon;
        match self.kind {
            KernelKind::Uniform => {
                if d <= self.epsilon {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Epanechnikov => {
                if d <= self.epsilon {
                    1.0 - u * u
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-0.5 * u * u).exp(),
        }
    }
}

/// Distances, kernel weights, and the accepted row set for one observation.
///
/// Weights are zero off the accepted set, so compact kernels satisfy
/// "positive weight iff accepted" and the Gaussian kernel is localised by the
/// same nearest-`keep` rule as the others.
#[derive(Debug, Clone)]
pub struct AcceptanceResult {
    pub distances: DVector<f64>,
    pub weights: DVector<f64>,
    pub accepted: Vec<usize>,
    pub epsilon: f64,
}

impl AcceptanceResult {
    /// Weights restricted to accepted rows, in `accepted` order.
    pub fn accepted_weights(&self) -> DVector<f64> {
        DVector::from_fn(self.accepted.len(), |i, _| self.weights[self.accepted[i]])
    }
}

/// Robust per-column scale: median absolute deviation, then standard
/// deviation if the MAD is zero, then 1 if both vanish.
pub fn compute_scale(table: &ReferenceTable) -> Result<DistanceScale> {
    let stats = table.stats();
    let n = stats.nrows();
    let mut factors = DVector::zeros(stats.ncols());
    let mut buf = vec![0.0f64; n];
    for j in 0..stats.ncols() {
        for i in 0..n {
            buf[i] = stats[(i, j)];
        }
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "statistic column '{}'",
                table.stat_names()[j]
            )));
        }
        let med = median(&mut buf.clone());
        let mut dev: Vec<f64> = buf.iter().map(|v| (v - med).abs()).collect();
        let mad = median(&mut dev);
        factors[j] = if mad > 0.0 {
            mad
        } else {
            let mean = buf.iter().sum::<f64>() / n as f64;
            let sd =
                (buf.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        };
    }
    DistanceScale::new(factors)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scaled Euclidean distance of every table row to `s_obs`.
pub fn distances(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    scale: &DistanceScale,
) -> Result<DVector<f64>> {
    let d = table.stat_dim();
    if s_obs.len() != d || scale.len() != d {
        return Err(Error::invalid(format!(
            "distance inputs disagree: table d = {d}, s_obs = {}, scale = {}",
            s_obs.len(),
            scale.len()
        )));
    }
    if s_obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed statistics".into()));
    }
    let stats = table.stats();
    let factors = scale.factors();
    Ok(DVector::from_fn(table.n(), |i, _| {
        let mut acc = 0.0;
        for k in 0..d {
            let z = (stats[(i, k)] - s_obs[k]) / factors[k];
            acc += z * z;
        }
        acc.sqrt()
    }))
}

/// The nearest-`keep` acceptance rule: returns the threshold (the `keep`-th
/// smallest distance) and the accepted row indices. Ties at the boundary are
/// broken by original index, so exactly `keep` rows come back.
pub fn select_epsilon(distances: &DVector<f64>, keep: usize) -> Result<(f64, Vec<usize>)> {
    let n = distances.len();
    if keep == 0 || keep > n {
        return Err(Error::invalid(format!("keep = {keep} outside 1..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let mut accepted = order[..keep].to_vec();
    let epsilon = distances[accepted[keep - 1]];
    accepted.sort_unstable();
    Ok((epsilon, accepted))
}

/// Unnormalised kernel weights at each distance.
pub fn kernel_weights(distances: &DVector<f64>, kernel: &Kernel) -> DVector<f64> {
    distances.map(|d| kernel.weight(d))
}

/// Compose the full acceptance step: distances are assumed precomputed; the
/// bandwidth comes from the nearest-`keep` rule and weights from `kind`,
/// masked to the accepted set.
///
/// A zero threshold (at least `keep` exact matches) degenerates every kernel
/// to the indicator of the accepted set.
pub fn accept_with_distances(
    distances: DVector<f64>,
    keep: usize,
    kind: KernelKind,
) -> Result<AcceptanceResult> {
    let (epsilon, accepted) = select_epsilon(&distances, keep)?;
    let mut weights = DVector::zeros(distances.len());
    if epsilon > 0.0 {
        let kernel = Kernel::new(kind, epsilon)?;
        for &i in &accepted {
            weights[i] = kernel.weight(distances[i]);
        }
        // An Epanechnikov kernel vanishes exactly at the boundary row; keep
        // the accepted set intact by flooring boundary weights.
        for &i in &accepted {
            if weights[i] <= 0.0 {
                weights[i] = f64::MIN_POSITIVE;
            }
        }
    } else {
        for &i in &accepted {
            weights[i] = 1.0;
        }
    }
    Ok(AcceptanceResult {
        distances,
        weights,
        accepted,
        epsilon,
    })
}

/// Distance computation plus acceptance in one call.
pub fn accept(
    table: &ReferenceTable,
    s_obs: &DVector<f64>,
    scale: &DistanceScale,
    keep: usize,
    kind: KernelKind,
) -> Result<AcceptanceResult> {
    let dist = distances(table, s_obs, scale)?;
    accept_with_distances(dist, keep, kind)
}

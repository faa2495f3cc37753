//! Reference-table construction: paired prior/simulator draws.
//!
//! The table is the raw material of every method in this crate: `n` rows of
//! `(theta_i, s_i)` drawn from prior × simulator. Construction is parallel
//! over rows, with each row consuming its own counter-derived RNG stream, so
//! the result is bit-identical for a given `(seed, n, simulator)` regardless
//! of thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{Prior, Simulator};
use crate::rng::row_rng;

/// Attempts per row before a simulator failure becomes a hard error.
/// Silently dropping failed rows would bias the prior sample.
const MAX_ROW_RETRIES: usize = 10;

/// `n` joint draws `(theta_i, s_i)` with their labels and generation seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    params: DMatrix<f64>,
    stats: DMatrix<f64>,
    seed: u64,
    param_names: Vec<String>,
    stat_names: Vec<String>,
}

impl ReferenceTable {
    /// Validate and assemble a table from raw matrices.
    pub fn from_parts(
        params: DMatrix<f64>,
        stats: DMatrix<f64>,
        seed: u64,
        param_names: Vec<String>,
        stat_names: Vec<String>,
    ) -> Result<Self> {
        if params.nrows() != stats.nrows() {
            return Err(Error::invalid(format!(
                "params has {} rows, stats has {}",
                params.nrows(),
                stats.nrows()
            )));
        }
        if params.nrows() < 2 {
            return Err(Error::invalid("reference table requires n >= 2 rows"));
        }
        if param_names.len() != params.ncols() || stat_names.len() != stats.ncols() {
            return Err(Error::invalid("label count does not match column count"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in param_names.iter().chain(stat_names.iter()) {
            if name.is_empty() || name.contains([',', ' ', '\t', '\n']) {
                return Err(Error::invalid(format!(
                    "label '{name}' is empty or has separators"
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::invalid(format!("duplicate label '{name}'")));
            }
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter matrix".into()));
        }
        if stats.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("statistic matrix".into()));
        }
        Ok(Self {
            params,
            stats,
            seed,
            param_names,
            stat_names,
        })
    }

    pub fn n(&self) -> usize {
        self.params.nrows()
    }

    /// Parameter dimension `p`.
    pub fn param_dim(&self) -> usize {
        self.params.ncols()
    }

    /// Statistic dimension `d`.
    pub fn stat_dim(&self) -> usize {
        self.stats.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &DMatrix<f64> {
        &self.params
    }

    pub fn stats(&self) -> &DMatrix<f64> {
        &self.stats
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn stat_names(&self) -> &[String] {
        &self.stat_names
    }

    pub fn param_row(&self, i: usize) -> DVector<f64> {
        self.params.row(i).transpose()
    }

    pub fn stat_row(&self, i: usize) -> DVector<f64> {
        self.stats.row(i).transpose()
    }

    /// A view of the same draws keeping only the statistic columns in
    /// `subset` (in the given order). Parameters are untouched.
    pub fn stat_subset(&self, subset: &[usize]) -> Result<ReferenceTable> {
        if subset.is_empty() {
            return Err(Error::invalid("statistic subset must be nonempty"));
        }
        let mut distinct = std::collections::HashSet::new();
        for &j in subset {
            if j >= self.stat_dim() {
                return Err(Error::invalid(format!(
                    "statistic index {j} out of range (d = {})",
                    self.stat_dim()
                )));
            }
            if !distinct.insert(j) {
                return Err(Error::invalid(format!("statistic index {j} repeated")));
            }
        }
        let stats = DMatrix::from_fn(self.n(), subset.len(), |i, c| self.stats[(i, subset[c])]);
        let stat_names = subset.iter().map(|&j| self.stat_names[j].clone()).collect();
        Ok(ReferenceTable {
            params: self.params.clone(),
            stats,
            seed: self.seed,
            param_names: self.param_names.clone(),
            stat_names,
        })
    }

    /// The same draws with the statistic matrix replaced, e.g. by projection
    /// statistics. Column count may change; row count must not.
    pub fn with_stats(
        &self,
        stats: DMatrix<f64>,
        stat_names: Vec<String>,
    ) -> Result<ReferenceTable> {
        ReferenceTable::from_parts(
            self.params.clone(),
            stats,
            self.seed,
            self.param_names.clone(),
            stat_names,
        )
    }
}

/// Draw `n` rows of `(theta, s)` from `prior` × `simulator`.
///
/// Row `i` uses RNG stream `i` derived from `seed`; a failed simulation is
/// retried with fresh randomness from the same stream up to ten times and
/// then reported as a hard error naming the offending `theta`. Rows are
/// generated in parallel.
pub fn build_reference_table(
    simulator: &dyn Simulator,
    prior: &dyn Prior,
    n: usize,
    seed: u64,
) -> Result<ReferenceTable> {
    if n < 2 {
        return Err(Error::invalid("build_reference_table requires n >= 2"));
    }
    if prior.dim() != simulator.param_dim() {
        return Err(Error::invalid(format!(
            "prior dimension {} does not match simulator parameter dimension {}",
            prior.dim(),
            simulator.param_dim()
        )));
    }
    let p = simulator.param_dim();
    let d = simulator.stat_dim();

    let rows: Vec<Result<(DVector<f64>, DVector<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i as u64);
            let theta = prior.draw(&mut rng);
            let mut last_err = String::new();
            for _ in 0..MAX_ROW_RETRIES {
                match simulator.draw(&theta, &mut rng) {
                    Ok(s) => {
                        if s.len() != d {
                            return Err(Error::invalid(format!(
                                "simulator returned {} statistics, expected {d}",
                                s.len()
                            )));
                        }
                        if s.iter().any(|v| !v.is_finite()) {
                            last_err = "non-finite statistic".into();
                            continue;
                        }
                        return Ok((theta, s));
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
            Err(Error::SimulationFailed {
                model: simulator.id(),
                attempts: MAX_ROW_RETRIES,
                theta: theta.iter().copied().collect(),
                reason: last_err,
            })
        })
        .collect();

    let mut params = DMatrix::zeros(n, p);
    let mut stats = DMatrix::zeros(n, d);
    for (i, row) in rows.into_iter().enumerate() {
        let (theta, s) = row?;
        params.row_mut(i).copy_from(&theta.transpose());
        stats.row_mut(i).copy_from(&s.transpose());
    }

    let param_names = (1..=p).map(|j| format!("t{j}")).collect();
    let stat_names = (1..=d).map(|j| format!("s{j}")).collect();
    ReferenceTable::from_parts(params, stats, seed, param_names, stat_names)
}

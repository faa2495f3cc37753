//! Likelihood-free Bayesian inference built around a simulated reference table.
//!
//! The pipeline is the classic rejection-ABC recipe plus the post-processing
//! steps that make it usable when the parameter dimension grows:
//!
//! 1. Draw `(θⁱ, sⁱ)` pairs from prior × simulator ([`table`]).
//! 2. Accept the draws whose summary statistics fall closest to the observed
//!    ones under a scaled Euclidean distance and a smoothing kernel
//!    ([`accept`]).
//! 3. Optionally regression-adjust the accepted draws, either with a weighted
//!    linear fit or a heteroscedastic conditional mean/scale model
//!    ([`regress`]).
//! 4. Summarise the same table with Monte Carlo Bayes linear quantities —
//!    adjusted expectation and adjusted variance — which the linear adjustment
//!    reproduces exactly at full acceptance ([`blin`]).
//! 5. Re-estimate each univariate margin in its own low-dimensional analysis
//!    and splice the improved margins back into the joint sample by order
//!    statistics ([`marginal`]).
//!
//! [`models`] provides the simulator/prior interface, a Gaussian-mixture
//! benchmark with exact likelihood and an exact posterior sampler, and an
//! external-process simulator protocol. [`eval`] holds the diagnostics used
//! to validate all of the above: kernel density estimates, Monte Carlo
//! Kullback–Leibler divergence against exact posteriors, and distribution
//! distance summaries. [`io`] persists tables and samples as delimited text
//! with key-value sidecars.

pub mod accept;
pub mod blin;
pub mod error;
pub mod eval;
pub mod io;
pub mod marginal;
pub mod models;
pub mod regress;
pub mod rng;
pub mod table;

mod linalg;

pub use accept::{accept, AcceptanceResult, DistanceScale, Kernel, KernelKind};
pub use blin::{BayesLinearSummary, MomentEstimate};
pub use error::{Error, Result};
pub use regress::{AdjustedSample, AdjustmentKind};
pub use table::ReferenceTable;

//! Declarative run configuration (TOML).
//!
//! One file describes the model, the simulation budget, the observation, the
//! inference settings and the benchmark grid. Parameter and statistic
//! indices in the file are 1-based, matching the column labels `t1, t2, ...`
//! and `s1, s2, ...` of persisted tables. A config round-trips through
//! serialization losslessly and is validated before any compute starts.

use abclin::accept::KernelKind;
use abclin::error::{Error, Result};
use abclin::marginal::{MarginalSpec, StatSelector};
use abclin::models::ModelSpec;
use abclin::regress::{AdjustmentKind, BasisDegree, DEFAULT_RIDGE};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_FORMAT: &str = "abclin.config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_format")]
    pub format: String,
    pub model: ModelConfig,
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub observe: ObserveConfig,
    #[serde(default)]
    pub infer: InferConfig,
    #[serde(default, rename = "marginal_spec")]
    pub marginal_specs: Vec<MarginalSpecConfig>,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

fn default_format() -> String {
    CONFIG_FORMAT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub id: String,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub prior_lo: Option<f64>,
    #[serde(default)]
    pub prior_hi: Option<f64>,
    /// External simulator executable (id = "external").
    #[serde(default)]
    pub command: Option<String>,
    /// Statistic dimension for external simulators.
    #[serde(default)]
    pub stat_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
}

/// Either an explicit observed statistic vector or a true parameter to
/// simulate one from (using its own dedicated random stream).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObserveConfig {
    #[serde(default)]
    pub s_obs: Option<Vec<f64>>,
    #[serde(default)]
    pub theta_true: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub keep: usize,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    /// Adjustments to emit: any of "rejection", "linear", "hetero".
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Also emit the marginally adjusted variant of each method.
    #[serde(default)]
    pub marginal: bool,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_degree")]
    pub hetero_degree: u8,
    #[serde(default)]
    pub shrinkage: f64,
}

fn default_kernel() -> String {
    "uniform".into()
}

fn default_methods() -> Vec<String> {
    vec!["rejection".into(), "linear".into()]
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

fn default_degree() -> u8 {
    2
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            keep: 0,
            kernel: default_kernel(),
            methods: default_methods(),
            marginal: false,
            ridge: default_ridge(),
            hetero_degree: default_degree(),
            shrinkage: 0.0,
        }
    }
}

/// Which statistics a marginal analysis uses: explicit 1-based indices or
/// the parameter's semi-automatic projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatsChoice {
    Indices(Vec<usize>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpecConfig {
    /// 1-based parameter index.
    pub param: usize,
    pub stats: StatsChoice,
    pub keep: usize,
    /// Defaults to the joint method being emitted.
    #[serde(default)]
    pub adjustment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Simulation budget per replicate (desk scale: 1% acceptance).
    #[serde(default = "default_bench_n")]
    pub n: usize,
    #[serde(default = "default_bench_keep")]
    pub keep: usize,
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
    /// Observed value repeated across coordinates.
    #[serde(default = "default_s_obs_value")]
    pub s_obs_value: f64,
}

fn default_dims() -> Vec<usize> {
    vec![2, 3, 4, 5]
}

fn default_replicates() -> usize {
    10
}

fn default_bench_n() -> usize {
    100_000
}

fn default_bench_keep() -> usize {
    2_000
}

fn default_oracle_draws() -> usize {
    2_000
}

fn default_s_obs_value() -> f64 {
    5.0
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            dims: default_dims(),
            replicates: default_replicates(),
            n: default_bench_n(),
            keep: default_bench_keep(),
            oracle_draws: default_oracle_draws(),
            s_obs_value: default_s_obs_value(),
        }
    }
}

impl RunConfig {
    /// Parse a config file; a manifest file (which embeds a `[config]`
    /// snapshot) is accepted transparently, so any completed run can be
    /// reproduced from its manifest alone.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let as_value: toml::Value = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let config_value = match as_value.get("config") {
            Some(embedded)
                if as_value.get("format").and_then(|f| f.as_str())
                    == Some(crate::manifest::MANIFEST_FORMAT) =>
            {
                embedded.clone()
            }
            _ => as_value,
        };
        let config: RunConfig = config_value.try_into().map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Build the model named by the config.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        match m.id.as_str() {
            "mixture" => Ok(ModelSpec::Mixture {
                p: m.p.ok_or_else(|| invalid("mixture model needs p"))?,
                omega: m.omega.unwrap_or(0.3),
                rho: m.rho.unwrap_or(0.7),
                prior_lo: m.prior_lo.unwrap_or(-20.0),
                prior_hi: m.prior_hi.unwrap_or(40.0),
            }),
            "conjugate_gaussian" => Ok(ModelSpec::ConjugateGaussian {
                p: m.p.ok_or_else(|| invalid("conjugate_gaussian needs p"))?,
            }),
            "external" => Ok(ModelSpec::External {
                command: m
                    .command
                    .clone()
                    .ok_or_else(|| invalid("external model needs command"))?,
                param_dim: m.p.ok_or_else(|| invalid("external model needs p"))?,
                stat_dim: m
                    .stat_dim
                    .ok_or_else(|| invalid("external model needs stat_dim"))?,
                prior_lo: m.prior_lo.unwrap_or(-20.0),
                prior_hi: m.prior_hi.unwrap_or(40.0),
            }),
            other => Err(invalid(format!("unknown model id '{other}'"))),
        }
    }

    pub fn kernel_kind(&self) -> Result<KernelKind> {
        KernelKind::parse(&self.infer.kernel)
    }

    pub fn methods(&self) -> Result<Vec<AdjustmentKind>> {
        let mut kinds = Vec::new();
        for name in &self.infer.methods {
            let kind = AdjustmentKind::parse(name)?;
            if kinds.contains(&kind) {
                return Err(invalid(format!("method '{name}' listed twice")));
            }
            kinds.push(kind);
        }
        if kinds.is_empty() {
            return Err(invalid("infer.methods is empty"));
        }
        Ok(kinds)
    }

    /// Resolve marginal specs for one joint method. Explicit specs win;
    /// otherwise one spec per parameter using its own statistic column
    /// (requires d = p). Spec adjustments default to the joint method.
    pub fn marginal_specs_for(
        &self,
        method: AdjustmentKind,
        param_dim: usize,
        stat_dim: usize,
    ) -> Result<Vec<MarginalSpec>> {
        let degree = BasisDegree::parse(self.infer.hetero_degree)?;
        if self.marginal_specs.is_empty() {
            if param_dim != stat_dim {
                return Err(invalid(
                    "marginal adjustment without [[marginal_spec]] entries requires one \
                     statistic per parameter",
                ));
            }
            return Ok((0..param_dim)
                .map(|j| {
                    let mut spec = MarginalSpec::new(
                        j,
                        StatSelector::Subset(vec![j]),
                        self.infer.keep,
                        method,
                    );
                    spec.ridge = self.infer.ridge;
                    spec.degree = degree;
                    spec
                })
                .collect());
        }
        self.marginal_specs
            .iter()
            .map(|c| {
                if c.param == 0 || c.param > param_dim {
                    return Err(invalid(format!(
                        "marginal spec parameter {} outside 1..={param_dim}",
                        c.param
                    )));
                }
                let stats = match &c.stats {
                    StatsChoice::Indices(ids) => {
                        let mut zero_based = Vec::with_capacity(ids.len());
                        for &i in ids {
                            if i == 0 || i > stat_dim {
                                return Err(invalid(format!(
                                    "marginal spec statistic {i} outside 1..={stat_dim}"
                                )));
                            }
                            zero_based.push(i - 1);
                        }
                        StatSelector::Subset(zero_based)
                    }
                    StatsChoice::Named(name) if name == "semi_automatic" => {
                        StatSelector::SemiAutomatic
                    }
                    StatsChoice::Named(other) => {
                        return Err(invalid(format!(
                            "marginal spec stats '{other}' (expected indices or 'semi_automatic')"
                        )));
                    }
                };
                let adjustment = match &c.adjustment {
                    Some(name) => AdjustmentKind::parse(name)?,
                    None => method,
                };
                let mut spec = MarginalSpec::new(c.param - 1, stats, c.keep, adjustment);
                spec.ridge = self.infer.ridge;
                spec.degree = degree;
                Ok(spec)
            })
            .collect()
    }

    /// Check internal consistency without touching the filesystem beyond the
    /// external command path.
    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT {
            return Err(invalid(format!(
                "config format '{}' is not {CONFIG_FORMAT}",
                self.format
            )));
        }
        let spec = self.model_spec()?;
        let model = spec.build()?;
        let d = model.simulator.stat_dim();
        // Fail on unresolvable references before any compute starts.
        if let Some(command) = &self.model.command {
            if command.contains('/') && !std::path::Path::new(command).exists() {
                return Err(invalid(format!(
                    "external command '{command}' does not exist"
                )));
            }
        }
        if self.simulate.n < 2 {
            return Err(invalid("simulate.n must be at least 2"));
        }
        if let (Some(_), Some(_)) = (&self.observe.s_obs, &self.observe.theta_true) {
            return Err(invalid(
                "observe: give either s_obs or theta_true, not both",
            ));
        }
        if let Some(s) = &self.observe.s_obs {
            if s.len() != d {
                return Err(invalid(format!(
                    "observe.s_obs has {} entries, model produces {d} statistics",
                    s.len()
                )));
            }
        }
        if let Some(t) = &self.observe.theta_true {
            if t.len() != model.simulator.param_dim() {
                return Err(invalid(format!(
                    "observe.theta_true has {} entries, model has {} parameters",
                    t.len(),
                    model.simulator.param_dim()
                )));
            }
        }
        if self.infer.keep > 0 {
            if self.infer.keep > self.simulate.n {
                return Err(invalid("infer.keep exceeds simulate.n"));
            }
            self.kernel_kind()?;
            self.methods()?;
            BasisDegree::parse(self.infer.hetero_degree)?;
            if !(0.0..=1.0).contains(&self.infer.shrinkage) {
                return Err(invalid("infer.shrinkage outside [0, 1]"));
            }
            if self.infer.ridge < 0.0 {
                return Err(invalid("infer.ridge must be nonnegative"));
            }
        }
        if self.benchmark.dims.is_empty() || self.benchmark.replicates == 0 {
            return Err(invalid("benchmark needs dims and replicates"));
        }
        if self.benchmark.keep > self.benchmark.n {
            return Err(invalid("benchmark.keep exceeds benchmark.n"));
        }
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

//! The three pipeline commands: simulate, infer, benchmark.
//!
//! Commands communicate only through files, so each stage can be re-run or
//! replaced (e.g. tables from an external simulator). Every command writes
//! its manifest last; an interrupted run leaves artifacts but no manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abclin::accept::{accept, compute_scale};
use abclin::blin::{bayes_linear_summary, estimate_moments, BayesLinearSummary};
use abclin::error::{Error, Result};
use abclin::eval::{kl_divergence, moment_report_vs_summary, KlReport};
use abclin::io::{self, SampleMeta};
use abclin::marginal::{marginal_adjust_pipeline_full, JointConfig, MarginalSpec};
use abclin::models::{MixtureModel, Model, ModelSpec};
use abclin::regress::{
    run_adjustment, AdjustedSample, AdjustmentKind, AdjustmentOptions, BasisDegree,
};
use abclin::rng::{derive_seed, stream_rng, Domain};
use abclin::table::build_reference_table;
use nalgebra::{DMatrix, DVector};

use crate::config::RunConfig;
use crate::manifest::RunManifest;

pub struct SimulateOutput {
    pub table_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Draw the reference table and persist it with its sidecar.
pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<SimulateOutput> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let model = config.model_spec()?.build()?;
    let started = Instant::now();
    let table = build_reference_table(
        model.simulator.as_ref(),
        model.prior.as_ref(),
        config.simulate.n,
        config.simulate.seed,
    )?;
    let elapsed = started.elapsed().as_secs_f64();

    let table_path = out_dir.join("table.csv");
    io::write_table(&table, &table_path, &model.simulator.id())?;

    let mut manifest = RunManifest::new("simulate", config);
    manifest.add_artifact("table", &table_path);
    manifest.add_timing("simulate", elapsed);
    let manifest_path = out_dir.join("manifest-simulate.toml");
    manifest.write(&manifest_path)?;
    Ok(SimulateOutput {
        table_path,
        manifest_path,
    })
}

/// The observed statistic vector: explicit, or simulated from `theta_true`
/// on the observation stream.
fn resolve_observation(config: &RunConfig, model: &Model) -> Result<DVector<f64>> {
    if let Some(s) = &config.observe.s_obs {
        return Ok(DVector::from_column_slice(s));
    }
    if let Some(t) = &config.observe.theta_true {
        let theta = DVector::from_column_slice(t);
        let mut rng = stream_rng(config.simulate.seed, Domain::Observation, 0);
        return model.simulator.draw(&theta, &mut rng);
    }
    Err(Error::Invalid(
        "observe: either s_obs or theta_true is required for inference".into(),
    ))
}

fn method_file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.csv"))
}

fn write_moment_report(
    path: &Path,
    method: &str,
    param_names: &[String],
    sample: &AdjustedSample,
    summary: &BayesLinearSummary,
) -> Result<()> {
    let report = moment_report_vs_summary(sample, summary)?;
    let mean = sample.mean();
    let cov = sample.covariance();
    let join = |v: Vec<String>| v.join(",");
    let pairs = vec![
        ("format".to_string(), "abclin.report/1".to_string()),
        ("method".to_string(), method.to_string()),
        ("params".to_string(), param_names.join(",")),
        (
            "sample_mean".to_string(),
            join(mean.iter().map(|v| v.to_string()).collect()),
        ),
        (
            "sample_sd".to_string(),
            join(
                (0..mean.len())
                    .map(|j| cov[(j, j)].max(0.0).sqrt().to_string())
                    .collect(),
            ),
        ),
        (
            "mean_diff_vs_bayes_linear".to_string(),
            join(report.mean_diff.iter().map(|v| v.to_string()).collect()),
        ),
        (
            "sd_diff_vs_bayes_linear".to_string(),
            join(report.sd_diff.iter().map(|v| v.to_string()).collect()),
        ),
        ("max_abs_diff".to_string(), report.max_abs_diff.to_string()),
        ("max_rel_diff".to_string(), report.max_rel_diff.to_string()),
        (
            "out_of_support".to_string(),
            sample.out_of_support.len().to_string(),
        ),
    ];
    io::write_kv(path, &pairs)
}

fn write_marginal_file(path: &Path, param_name: &str, values: &[f64]) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "theta_{param_name}").expect("string write");
    for v in values {
        writeln!(text, "{v}").expect("string write");
    }
    fs::write(path, text)?;
    Ok(())
}

pub struct InferOutput {
    /// Method name ("linear", "linear_marginal", ...) to sample file.
    pub sample_paths: BTreeMap<String, PathBuf>,
    pub bayes_linear_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Run every requested method (and its marginal variant) over a persisted
/// table, emitting sample files, moment reports and the Bayes linear
/// summary.
pub fn cmd_infer(config: &RunConfig, table_path: &Path, out_dir: &Path) -> Result<InferOutput> {
    config.validate()?;
    if config.infer.keep == 0 {
        return Err(Error::Invalid("infer.keep must be positive".into()));
    }
    fs::create_dir_all(out_dir)?;
    let model = config.model_spec()?.build()?;
    let (table, meta) = io::read_table(table_path)?;
    if meta.model != model.simulator.id() {
        return Err(Error::Invalid(format!(
            "table was generated by '{}', config names '{}'",
            meta.model,
            model.simulator.id()
        )));
    }
    if table.param_dim() != model.simulator.param_dim()
        || table.stat_dim() != model.simulator.stat_dim()
    {
        return Err(Error::Invalid(
            "table dimensions do not match the model".into(),
        ));
    }
    if config.infer.keep > table.n() {
        return Err(Error::Invalid("infer.keep exceeds table rows".into()));
    }

    let s_obs = resolve_observation(config, &model)?;
    let kernel = config.kernel_kind()?;
    let methods = config.methods()?;
    let degree = BasisDegree::parse(config.infer.hetero_degree)?;
    let support = model.prior.support();

    let mut manifest = RunManifest::new("infer", config);
    let mut outputs = BTreeMap::new();

    let started = Instant::now();
    let scale = compute_scale(&table)?;
    let acceptance = accept(&table, &s_obs, &scale, config.infer.keep, kernel)?;
    manifest.add_timing("acceptance", started.elapsed().as_secs_f64());

    // One Bayes linear summary per run; the moment reports compare each
    // method's sample against it.
    let started = Instant::now();
    let moments = estimate_moments(&table, config.infer.shrinkage)?;
    let summary = bayes_linear_summary(&moments, &s_obs)?;
    let bayes_linear_path = out_dir.join("bayes_linear.txt");
    io::write_blin_report(&summary, table.param_names(), &bayes_linear_path)?;
    manifest.add_artifact("bayes_linear", &bayes_linear_path);
    manifest.add_timing("bayes_linear", started.elapsed().as_secs_f64());

    let sample_meta = |method: &str| SampleMeta {
        method: method.to_string(),
        source_table: table_path.display().to_string(),
        keep: config.infer.keep,
        kernel: kernel.name().to_string(),
        epsilon: acceptance.epsilon,
        ridge: config.infer.ridge,
    };

    for method in methods {
        let name = method.name();
        let started = Instant::now();
        let options = AdjustmentOptions {
            kind: method,
            ridge: config.infer.ridge,
            degree,
        };
        let mut sample = run_adjustment(&table, &s_obs, &acceptance, &options)?;
        if let Some((lo, hi)) = &support {
            sample.flag_out_of_support(lo, hi);
        }
        let path = method_file(out_dir, &format!("samples_{name}"));
        io::write_sample(&sample, table.param_names(), &path, &sample_meta(name))?;
        manifest.add_artifact(&format!("samples_{name}"), &path);
        for w in &sample.warnings {
            manifest.warnings.push(format!("{name}: {w}"));
        }

        let report_path = out_dir.join(format!("report_{name}.txt"));
        write_moment_report(&report_path, name, table.param_names(), &sample, &summary)?;
        manifest.add_artifact(&format!("report_{name}"), &report_path);
        outputs.insert(name.to_string(), path);

        if config.infer.marginal {
            let specs = config.marginal_specs_for(method, table.param_dim(), table.stat_dim())?;
            let joint = JointConfig {
                keep: config.infer.keep,
                kernel,
                adjustment: options,
            };
            let out = marginal_adjust_pipeline_full(&table, &s_obs, &joint, &specs)?;
            let mut adjusted = out.sample;
            if let Some((lo, hi)) = &support {
                adjusted.flag_out_of_support(lo, hi);
            }
            let variant = format!("{name}_marginal");
            let path = method_file(out_dir, &format!("samples_{variant}"));
            io::write_sample(
                &adjusted,
                table.param_names(),
                &path,
                &sample_meta(&variant),
            )?;
            manifest.add_artifact(&format!("samples_{variant}"), &path);

            for marginal in &out.marginals {
                let pname = &table.param_names()[marginal.param()];
                let mpath = out_dir.join(format!("marginal_{name}_{pname}.csv"));
                write_marginal_file(&mpath, pname, marginal.values())?;
                manifest.add_artifact(&format!("marginal_{name}_{pname}"), &mpath);
            }

            let report_path = out_dir.join(format!("report_{variant}.txt"));
            write_moment_report(
                &report_path,
                &variant,
                table.param_names(),
                &adjusted,
                &summary,
            )?;
            manifest.add_artifact(&format!("report_{variant}"), &report_path);
            outputs.insert(variant, path);
        }
        manifest.add_timing(&format!("method_{name}"), started.elapsed().as_secs_f64());
    }

    let manifest_path = out_dir.join("manifest-infer.toml");
    manifest.write(&manifest_path)?;
    Ok(InferOutput {
        sample_paths: outputs,
        bayes_linear_path,
        manifest_path,
    })
}

/// One row of the benchmark's divergence table.
#[derive(Debug, Clone)]
pub struct KlRow {
    pub method: String,
    pub p: usize,
    pub replicate: usize,
    pub report: KlReport,
}

pub struct BenchmarkOutput {
    pub rows: Vec<KlRow>,
    pub kl_table_path: PathBuf,
    pub kl_plot_path: PathBuf,
    pub manifest_path: PathBuf,
}

const BENCH_METHODS: [&str; 4] = [
    "rejection",
    "linear",
    "rejection_marginal",
    "linear_marginal",
];

/// The dimension-sweep experiment: for each model dimension and replicate,
/// simulate a fresh table, run rejection and linear adjustment with and
/// without marginal adjustment, and score each against the exact posterior
/// of the first one or two coordinates by Monte Carlo KL divergence.
pub fn cmd_benchmark(config: &RunConfig, out_dir: &Path) -> Result<BenchmarkOutput> {
    config.validate()?;
    let spec = config.model_spec()?;
    let (omega, rho, prior_lo, prior_hi) = match spec {
        ModelSpec::Mixture {
            omega,
            rho,
            prior_lo,
            prior_hi,
            ..
        } => (omega, rho, prior_lo, prior_hi),
        _ => {
            return Err(Error::Invalid(
                "the benchmark runs on the mixture model only".into(),
            ))
        }
    };
    fs::create_dir_all(out_dir)?;
    let bench = &config.benchmark;
    let seed = config.simulate.seed;

    let mut manifest = RunManifest::new("benchmark", config);
    let mut rows: Vec<KlRow> = Vec::new();
    let started = Instant::now();

    for &p in &bench.dims {
        let model = MixtureModel::new(p, omega, rho, prior_lo, prior_hi)?;
        let prior = abclin::models::UniformBoxPrior::new(
            DVector::from_element(p, prior_lo),
            DVector::from_element(p, prior_hi),
        )?;
        let s_obs = DVector::from_element(p, bench.s_obs_value);
        let k = p.min(2);
        let oracle = model.posterior_oracle(&s_obs, k)?;
        let oracle_model = model.collapse(k)?;
        let s_obs_k = DVector::from_element(k, bench.s_obs_value);

        for replicate in 0..bench.replicates {
            let rep_seed = derive_seed(seed, ((p as u64) << 32) | replicate as u64);
            let table = build_reference_table(&model, &prior, bench.n, rep_seed)?;
            let scale = compute_scale(&table)?;
            let acceptance = accept(
                &table,
                &s_obs,
                &scale,
                bench.keep,
                abclin::accept::KernelKind::Uniform,
            )?;

            let mut oracle_rng = stream_rng(rep_seed, Domain::Oracle, 0);
            let oracle_draws = oracle_model.exact_posterior_sample(
                &s_obs_k,
                bench.oracle_draws,
                &mut oracle_rng,
            )?;

            for method in BENCH_METHODS {
                let sample = match method {
                    "rejection" => AdjustedSample::from_acceptance(&table, &acceptance),
                    "linear" => run_adjustment(
                        &table,
                        &s_obs,
                        &acceptance,
                        &AdjustmentOptions {
                            kind: AdjustmentKind::Linear,
                            ridge: config.infer.ridge,
                            degree: BasisDegree::Quadratic,
                        },
                    )?,
                    "rejection_marginal" | "linear_marginal" => {
                        let kind = if method.starts_with("linear") {
                            AdjustmentKind::Linear
                        } else {
                            AdjustmentKind::Rejection
                        };
                        let specs: Vec<MarginalSpec> = (0..p)
                            .map(|j| {
                                MarginalSpec::new(
                                    j,
                                    abclin::marginal::StatSelector::Subset(vec![j]),
                                    bench.keep,
                                    kind,
                                )
                            })
                            .collect();
                        let joint = JointConfig {
                            keep: bench.keep,
                            kernel: abclin::accept::KernelKind::Uniform,
                            adjustment: AdjustmentOptions {
                                kind,
                                ridge: config.infer.ridge,
                                degree: BasisDegree::Quadratic,
                            },
                        };
                        marginal_adjust_pipeline_full(&table, &s_obs, &joint, &specs)?.sample
                    }
                    _ => unreachable!(),
                };
                let abc_k = DMatrix::from_fn(sample.n_rows(), k, |i, j| sample.values[(i, j)]);
                let report = kl_divergence(&oracle_draws, |t| oracle.log_pdf(t), &abc_k)?;
                rows.push(KlRow {
                    method: method.to_string(),
                    p,
                    replicate,
                    report,
                });
            }
        }
    }
    manifest.add_timing("benchmark", started.elapsed().as_secs_f64());

    // Per-replicate rows.
    let kl_table_path = out_dir.join("kl_table.csv");
    let mut text =
        String::from("# format: abclin.kl_table/1\nmethod,p,replicate,kl,stderr,floor_hits\n");
    for row in &rows {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            row.method,
            row.p,
            row.replicate,
            row.report.estimate,
            row.report.std_error,
            row.report.floor_hits
        )
        .expect("string write");
    }
    fs::write(&kl_table_path, text)?;
    manifest.add_artifact("kl_table", &kl_table_path);

    // Plot series: one line per method, divergence vs dimension.
    let kl_plot_path = out_dir.join("kl_plot.csv");
    let mut text = String::from("# format: abclin.kl_plot/1\nmethod,p,kl,stderr,floor_hits\n");
    for method in BENCH_METHODS {
        for &p in &bench.dims {
            let series: Vec<&KlRow> = rows
                .iter()
                .filter(|r| r.method == method && r.p == p)
                .collect();
            let m = series.len() as f64;
            let mean = series.iter().map(|r| r.report.estimate).sum::<f64>() / m;
            let stderr = if series.len() > 1 {
                let var = series
                    .iter()
                    .map(|r| (r.report.estimate - mean).powi(2))
                    .sum::<f64>()
                    / (m - 1.0);
                (var / m).sqrt()
            } else {
                series[0].report.std_error
            };
            let floor_hits: usize = series.iter().map(|r| r.report.floor_hits).sum();
            writeln!(text, "{method},{p},{mean},{stderr},{floor_hits}").expect("string write");
        }
    }
    fs::write(&kl_plot_path, text)?;
    manifest.add_artifact("kl_plot", &kl_plot_path);

    let manifest_path = out_dir.join("manifest-benchmark.toml");
    manifest.write(&manifest_path)?;
    Ok(BenchmarkOutput {
        rows,
        kl_table_path,
        kl_plot_path,
        manifest_path,
    })
}

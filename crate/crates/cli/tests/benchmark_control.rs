//! At one dimension the rejection sampler is nearly exact, so its benchmark
//! KL should sit at the KDE-bias floor measured by the oracle-vs-oracle
//! control at the same sample size.

use abclin::eval::kl_divergence;
use abclin::models::MixtureModel;
use abclin::rng::{stream_rng, Domain};
use abclin_cli::commands::cmd_benchmark;
use abclin_cli::RunConfig;
use nalgebra::DVector;

#[test]
fn p1_rejection_sits_in_the_control_band() {
    let config: RunConfig = toml::from_str(
        r#"
        [model]
        id = "mixture"
        p = 1

        [simulate]
        n = 100000
        seed = 13

        [benchmark]
        dims = [1]
        replicates = 1
        n = 100000
        keep = 2000
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_benchmark(&config, dir.path()).unwrap();
    let rejection = out
        .rows
        .iter()
        .find(|r| r.method == "rejection" && r.p == 1)
        .unwrap();

    // Control: exact-posterior draws of the same size as the accepted
    // sample, scored against the same oracle machinery.
    let model = MixtureModel::new(1, 0.3, 0.7, -20.0, 40.0).unwrap();
    let s_obs = DVector::from_element(1, 5.0);
    let oracle = model.posterior_oracle(&s_obs, 1).unwrap();
    let mut rng = stream_rng(77, Domain::Oracle, 0);
    let oracle_draws = model
        .exact_posterior_sample(&s_obs, 2_000, &mut rng)
        .unwrap();
    let mut rng = stream_rng(77, Domain::Oracle, 1);
    let own = model
        .exact_posterior_sample(&s_obs, config.benchmark.keep, &mut rng)
        .unwrap();
    let control = kl_divergence(&oracle_draws, |t| oracle.log_pdf(t), &own).unwrap();

    let diff = (rejection.report.estimate - control.estimate).abs();
    let band = 0.05 + 3.0 * (rejection.report.std_error + control.std_error);
    assert!(
        diff < band,
        "rejection KL {} vs control {} (band {band})",
        rejection.report.estimate,
        control.estimate
    );
}

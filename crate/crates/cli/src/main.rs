use std::path::PathBuf;

use abclin_cli::{cmd_benchmark, cmd_infer, cmd_simulate, exit_code, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "abclin",
    about = "Likelihood-free inference: rejection ABC, regression adjustment, \
             Bayes linear summaries and marginal adjustment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); a run manifest is also accepted.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Cap worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the reference table from prior x simulator and persist it.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run acceptance, adjustments and reports over a persisted table.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Reference table produced by `simulate`.
        #[arg(long)]
        table: PathBuf,
    },
    /// Dimension sweep on the mixture benchmark with KL scoring.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Override the configured model dimensions, e.g. `--dims 2,3`.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Override the configured replicate count.
        #[arg(long)]
        replicates: Option<usize>,
    },
}

fn load_config(common: &Common) -> abclin::Result<RunConfig> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.simulate.seed = seed;
    }
    Ok(config)
}

fn in_pool<T>(threads: usize, run: impl FnOnce() -> abclin::Result<T> + Send) -> abclin::Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| abclin::Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(run)
}

fn run(cli: Cli) -> abclin::Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let config = load_config(&common)?;
            let out = in_pool(common.threads, || cmd_simulate(&config, &common.out))?;
            println!("table: {}", out.table_path.display());
            println!("manifest: {}", out.manifest_path.display());
        }
        Command::Infer { common, table } => {
            let config = load_config(&common)?;
            let out = in_pool(common.threads, || cmd_infer(&config, &table, &common.out))?;
            for (method, path) in &out.sample_paths {
                println!("samples[{method}]: {}", path.display());
            }
            println!("bayes_linear: {}", out.bayes_linear_path.display());
            println!("manifest: {}", out.manifest_path.display());
        }
        Command::Benchmark {
            common,
            dims,
            replicates,
        } => {
            let mut config = load_config(&common)?;
            if let Some(dims) = dims {
                config.benchmark.dims = dims;
            }
            if let Some(replicates) = replicates {
                config.benchmark.replicates = replicates;
            }
            let out = in_pool(common.threads, || cmd_benchmark(&config, &common.out))?;
            println!("kl_table: {}", out.kl_table_path.display());
            println!("kl_plot: {}", out.kl_plot_path.display());
            println!("manifest: {}", out.manifest_path.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

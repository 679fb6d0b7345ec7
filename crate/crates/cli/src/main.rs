use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bvx_cli::config::{ExperimentConfig, LinearOracleConfig};
use bvx_cli::oracle::{run_linear_oracle, write_oracle_table};
use bvx_cli::report::build_report;
use bvx_cli::sweep::{run_sweep, write_outputs};
use bvx_cli::CliError;
use bvx_core::generate;
use bvx_core::rng::derive_seed;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bvx", version, about = "Bias-variance sweeps for neural networks and linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "BVX_JOBS")]
    jobs: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train ensembles across widths and write sweep.csv.
    Sweep(Common),
    /// Check linear-model variance against its closed form.
    LinearOracle(Common),
    /// Merge sweep.csv files under a directory and print trends.
    Report {
        /// Directory searched recursively for sweep.csv files.
        dir: PathBuf,
    },
    /// Write the train and test sets of a sweep config as CSV.
    GenData(Common),
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Config(e.to_string()))
}

fn load_experiment(c: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.experiment.master_seed = seed;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.experiment.output_dir.clone());
    Ok((cfg, out))
}

fn sweep(c: &Common) -> Result<(), CliError> {
    let (cfg, out) = load_experiment(c)?;
    let outcome = pool(c.jobs)?.install(|| run_sweep(&cfg))?;
    write_outputs(&outcome, &out)?;
    for w in &outcome.widths {
        eprintln!(
            "width {:>5}: step {} ({:?}), e_bias {:.4e}, e_variance {:.4e}",
            w.width, w.step, w.step_source, w.row.e_bias, w.row.e_variance
        );
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        let widths: Vec<String> = outcome.failures.iter().map(|f| f.width.to_string()).collect();
        Err(CliError::Divergence(format!(
            "{} member failure(s) at width(s) {}; see {}",
            outcome.failures.len(),
            dedup(widths).join(", "),
            out.join("failures.csv").display()
        )))
    }
}

fn dedup(mut v: Vec<String>) -> Vec<String> {
    v.dedup();
    v
}

fn linear_oracle(c: &Common) -> Result<(), CliError> {
    let mut cfg = LinearOracleConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.linear.seed = seed;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.linear.output_dir.clone());
    let rows = pool(c.jobs)?.install(|| run_linear_oracle(&cfg))?;
    write_oracle_table(&rows, &out)?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} N={} point={} rel_err={:.3e}", r.check, r.n, r.point_id, r.rel_err))
        .collect();
    eprintln!("{} checks, {} failed", rows.len(), failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join("; ")))
    }
}

fn gen_data(c: &Common) -> Result<(), CliError> {
    let (cfg, out) = load_experiment(c)?;
    let e = &cfg.experiment;
    std::fs::create_dir_all(&out).map_err(|err| CliError::Io {
        path: out.clone(),
        message: err.to_string(),
    })?;
    let sets = [
        ("train.csv", cfg.task.to_spec(), e.train_size, "train-set"),
        ("test.csv", cfg.task.test_spec(), e.test_size, "test-set"),
    ];
    for (name, spec, size, tag) in sets {
        let data = generate(&spec, size, derive_seed(e.master_seed, tag, &[]))?;
        let path = out.join(name);
        write_dataset(&data, &path)?;
    }
    Ok(())
}

fn write_dataset(data: &bvx_core::Dataset, path: &Path) -> Result<(), CliError> {
    let io = |err: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        message: err.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io)?;
    data.write_csv(std::io::BufWriter::new(file)).map_err(io)
}

fn report(dir: &Path) -> Result<(), CliError> {
    if !dir.exists() {
        println!("no results");
        return Ok(());
    }
    print!("{}", build_report(dir)?.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(c) => sweep(c),
        Command::LinearOracle(c) => linear_oracle(c),
        Command::Report { dir } => report(dir),
        Command::GenData(c) => gen_data(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

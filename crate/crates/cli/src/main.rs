use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use msbvm::config::{ExperimentConfig, CONFIG_REFERENCE};
use msbvm::harness::{ExperimentRegistry, ExperimentReport};
use msbvm::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Frequentist coverage of the multiscale, Hölder-intersected and CDF bands
    Coverage,
    /// Posterior against its Gaussian limit (KS surrogates with noise floors)
    Bvm,
    /// Posterior sup-distance of CDFs against the Kolmogorov law
    Donsker,
    /// Diameter of the Hölder-intersected band against ln(n) / n
    Rates,
    /// Multiscale norm of the centred empirical projection against its Gaussian limit
    Clt,
    /// Posterior draws and credible band for one simulated dataset
    SamplePosterior,
    /// Haar coefficients of the configured truth
    Analyze,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Coverage => "coverage",
            Command::Bvm => "bvm",
            Command::Donsker => "donsker",
            Command::Rates => "rates",
            Command::Clt => "clt",
            Command::SamplePosterior => "sample-posterior",
            Command::Analyze => "analyze",
        }
    }
}

/// Bayesian multiscale inference experiments on Haar wavelet coefficients.
///
/// Writes <scenario>-<subcommand>-<seed>.csv (one row per replicate) and .json (aggregates,
/// warnings, config echo, version) into the output directory. Exit status: 0 on success,
/// 2 on an invalid or missing config, 3 on runtime failure.
#[derive(Debug, Parser)]
#[command(name = "msbvm", version, after_long_help = CONFIG_REFERENCE)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Experiment config (TOML, unknown keys rejected)
    #[arg(long, short)]
    config: PathBuf,

    /// Override the master seed from the config
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long, env = "MSBVM_THREADS")]
    threads: Option<usize>,

    /// Output directory, created if missing
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write(report: &ExperimentReport, subcommand: &str, out: &Path) -> Result<PathBuf, Error> {
    fs::create_dir_all(out)?;
    let stem = format!("{}-{}-{}", report.scenario, subcommand, report.seed);
    let csv = out.join(format!("{stem}.csv"));
    report.write_csv(fs::File::create(&csv)?)?;
    fs::write(out.join(format!("{stem}.json")), report.to_json()?)?;
    Ok(csv)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let name = cli.command.name();
    let report = pool.install(|| ExperimentRegistry::default().run(name, &cfg))?;
    let csv = write(&report, name, &cli.out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let errors = report.error_count();
    if errors > 0 {
        eprintln!("warning: {errors} replicate(s) failed, see the `error` column");
    }
    println!("{} -> {}", report.summary_line(), csv.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

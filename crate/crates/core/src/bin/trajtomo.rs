use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajtomo::cli::{self, RunConfig};
use trajtomo::{Error, Tolerances};

#[derive(Parser)]
#[command(name = "trajtomo", version, about = "State tomography from ensembles of measurement trajectories")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "TRAJTOMO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a record file from a model file.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n_trajectories: usize,
    },
    /// Estimate the state at each start time, with confidence intervals.
    Tomography(TomographyArgs),
    /// Run the validation suites; exits non-zero if any check fails.
    Validate {
        /// JSON report path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct TomographyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    records: PathBuf,
    /// Results CSV; the JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Seconds, comma separated or `start:stop:step`.
    #[arg(long, default_value = "0")]
    start_times: String,
    /// pauli-x, pauli-y, pauli-z, photon-number or NAME=matrix.json.
    #[arg(long, default_value = "")]
    observables: String,
    /// JSON file overriding numerical tolerances.
    #[arg(long)]
    tolerances: Option<PathBuf>,
    /// Also write the mean normalized signal per time bin.
    #[arg(long)]
    report_ensemble_average: bool,
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate {
            model,
            out,
            seed,
            n_trajectories,
        } => {
            let cfg = RunConfig {
                model_path: Some(model),
                output_path: Some(out),
                rng_seed: seed,
                n_trajectories,
                ..RunConfig::default()
            };
            cli::cmd_simulate(&cfg)?;
            Ok(true)
        }
        Command::Tomography(a) => {
            let tolerances = match &a.tolerances {
                Some(p) => serde_json::from_slice::<Tolerances>(&std::fs::read(p)?)?,
                None => Tolerances::DEFAULT,
            };
            let cfg = RunConfig {
                model_path: Some(a.model),
                records_path: Some(a.records),
                output_path: Some(a.out),
                start_times: cli::parse_start_times(&a.start_times)?,
                observables: cli::parse_observables(&a.observables)?,
                tolerances,
                report_ensemble_average: a.report_ensemble_average,
                ..RunConfig::default()
            };
            cli::cmd_tomography(&cfg)?;
            Ok(true)
        }
        Command::Validate { out, seed } => {
            let cfg = RunConfig {
                output_path: out,
                rng_seed: seed,
                ..RunConfig::default()
            };
            let report = cli::cmd_validate(&cfg)?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAILED {}: {:e} > {:e}", c.name, c.residual, c.threshold);
            }
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

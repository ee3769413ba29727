use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_mc::{BuildMode, BuildOptions};
use lattice_mc_cli::commands::{run_build, run_export, run_inspect, run_study, ModelSource, StudyKind, StudyParams, STUDY_HELP};
use lattice_mc_cli::export::ExportFormat;
use lattice_mc_cli::CliError;

/// Build lattice Markov chains for SDEs, export them and run studies.
///
/// Set LATTICE_MC_THREADS to cap the number of worker threads.
#[derive(Parser)]
#[command(name = "lattice-mc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// JSON model config.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    config: Option<PathBuf>,
    /// Builtin model: bm, gbm, toy2d or heston_mod.
    #[arg(long)]
    builtin: Option<String>,
}

impl ModelArgs {
    fn source(&self) -> ModelSource {
        match (&self.config, &self.builtin) {
            (Some(p), _) => ModelSource::File(p.clone()),
            (None, Some(b)) => ModelSource::Builtin(b.clone()),
            (None, None) => unreachable!("clap requires one of the two"),
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Exponent for the lattice step of degenerate 1-D models.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
    /// auto, exact-only or fallback-only.
    #[arg(long, default_value = "auto")]
    mode: String,
}

impl BuildArgs {
    fn options(&self) -> Result<BuildOptions, CliError> {
        let mode: BuildMode = self.mode.parse()?;
        Ok(BuildOptions { beta: self.beta, max_states: self.max_states, mode, ..Default::default() })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a chain; writes chain.json and report.json.
    Build {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Export a chain artifact as triplets (chain.csv) or prism (chain.sta, chain.tra).
    Export {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value = "triplets")]
        format: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a study and write its JSON report and CSV table.
    #[command(after_help = STUDY_HELP)]
    Study {
        #[command(flatten)]
        model: ModelArgs,
        /// convergence, growth, stopping, consistency or relerr.
        #[arg(long)]
        study: String,
        /// Chain size for growth, stopping and consistency studies.
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Comma-separated chain sizes for convergence and relerr studies.
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        /// Seed for Monte Carlo references.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        paths: usize,
        /// Euler steps per Monte Carlo path.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Print a summary of a chain artifact.
    Inspect {
        #[arg(long)]
        chain: PathBuf,
    },
}

fn print_json(v: &impl serde::Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build { model, n, out, build } => print_json(&run_build(&model.source(), n, &build.options()?, &out)?),
        Command::Export { chain, format, out } => {
            let format: ExportFormat = format.parse()?;
            print_json(&run_export(&chain, format, &out)?)
        }
        Command::Study { model, study, n, ns, seed, paths, steps, out, build } => {
            let kind: StudyKind = study.parse()?;
            let params = StudyParams { kind, n, ns, seed, mc_steps: steps, mc_paths: paths };
            print_json(&run_study(&model.source(), &params, &build.options()?, &out)?)
        }
        Command::Inspect { chain } => print_json(&run_inspect(&chain)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

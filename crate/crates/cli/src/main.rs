use clap::{Parser, Subcommand};
use lsbl_cli::{run, CliError, Context, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Reproducible sparse-recovery experiments: dataset generation, layerwise
/// network training, evaluation sweeps, radar simulation, and weight export.
#[derive(Parser)]
#[command(name = "lsbl", version, about)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Forces the fully serial, bit-reproducible execution path.
    #[arg(long, global = true)]
    serial: bool,

    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset and write the binary container.
    Generate,
    /// Train a model layerwise on a dataset container.
    Train,
    /// Sweep sparsity levels and write per-solver RMSE / failure-rate rows.
    Eval,
    /// Export each layer's weight matrix (plus bias) as CSV.
    DumpWeights,
    /// Build the radar scene, train or load a model, and sweep SNR.
    Radar,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Schema("--config <path> is required".into()))?;
    let config = ExperimentConfig::load(&config_path)?;
    let ctx = Context::new(config, cli.seed, cli.out, cli.serial);
    match cli.command {
        Command::Generate => run::cmd_generate(&ctx),
        Command::Train => run::cmd_train(&ctx),
        Command::Eval => run::cmd_eval(&ctx),
        Command::DumpWeights => run::cmd_dump_weights(&ctx),
        Command::Radar => run::cmd_radar(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

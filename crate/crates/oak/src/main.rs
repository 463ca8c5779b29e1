use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oak::cli::commands;

/// Additive GP regression with orthogonal per-feature kernels, analytic
/// Sobol attribution and component-wise decomposition exports.
#[derive(Parser)]
#[command(name = "oak", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV file and persist it as JSON.
    Fit {
        /// Training data (CSV with a header row).
        #[arg(long)]
        data: PathBuf,
        /// Name of the target column.
        #[arg(long)]
        target: String,
        /// JSON run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Reference the training CSV by path and content hash instead of
        /// embedding it in the model file.
        #[arg(long)]
        reference_data: bool,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank components of a fitted model by their Sobol indices.
    Sobol {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export component posteriors over grids for plotting.
    Decompose {
        #[arg(long)]
        model: PathBuf,
        /// Semicolon-separated subsets of 1-based feature indices,
        /// e.g. "1;2;1,2".
        #[arg(long)]
        subsets: Option<String>,
        /// Export the top-k Sobol-ranked components instead.
        #[arg(long)]
        topk: Option<usize>,
        /// Grid points per continuous feature.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict on new data, optionally truncated to the top-k components.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            data,
            target,
            config,
            seed,
            reference_data,
            out,
        } => commands::cmd_fit(
            &data,
            &target,
            config.as_deref(),
            seed,
            reference_data,
            &out,
        ),
        Command::Sobol { model, out } => commands::cmd_sobol(&model, &out),
        Command::Decompose {
            model,
            subsets,
            topk,
            grid,
            out,
        } => commands::cmd_decompose(&model, subsets.as_deref(), topk, grid, &out),
        Command::Predict {
            model,
            data,
            topk,
            out,
        } => commands::cmd_predict(&model, &data, topk, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

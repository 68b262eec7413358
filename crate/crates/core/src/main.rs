use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use redslds::cli::{cmd_evaluate, cmd_fit, cmd_generate, load_fit_data, write_json_to};
use redslds::config::RunConfig;
use redslds::Result;

#[derive(Parser)]
#[command(name = "redslds", version, about = "Switching linear dynamical systems with explicit, recurrent durations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV plus manifest.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run Gibbs chains and write checkpoints, diagnostics and a report.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// CSV data file; defaults to the data block of the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        /// Continue from the checkpoints in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a segmentation against labelled data.
    Evaluate {
        /// Segmentation CSV (`seq`, `s`) or labelled CSV (`seq`, `label`).
        #[arg(long)]
        pred: PathBuf,
        /// CSV with `seq` and `label` columns.
        #[arg(long)]
        truth: PathBuf,
        /// Chain to score when the prediction holds several.
        #[arg(long)]
        chain: Option<usize>,
        /// Write the score JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>, chains: Option<usize>, iters: Option<usize>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(s) = seed {
        config.run.seed = s;
    }
    if let Some(c) = chains {
        config.run.chains = c;
    }
    if let Some(i) = iters {
        config.run.iterations = i;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let config = load(&config, seed, None, None)?;
            let path = cmd_generate(&config, &out)?;
            println!("{}", path.display());
        }
        Command::Fit {
            config,
            data,
            out,
            seed,
            chains,
            iters,
            resume,
        } => {
            let config = load(&config, seed, chains, iters)?;
            let dataset = load_fit_data(&config, data.as_deref())?;
            let report = cmd_fit(&config, &dataset, &out, resume.as_deref())?;
            print!("{}", report.to_table());
        }
        Command::Evaluate {
            pred,
            truth,
            chain,
            out,
        } => {
            let score = cmd_evaluate(&pred, &truth, chain)?;
            write_json_to(out.as_deref(), &(serde_json::to_string_pretty(&score)? + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

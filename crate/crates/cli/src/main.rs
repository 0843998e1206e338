use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use driftnet_cli::CliError;
use driftnet_cli::{
    cmd_datagen, cmd_report, cmd_run, load_config, parse_schemes, Overrides, RunOptions,
};
use driftnet_core::schemes::SchemeKind;
use driftnet_core::SimConfig;
use tracing_subscriber::EnvFilter;

/// Multi-center output drift monitoring simulator.
#[derive(Parser)]
#[command(name = "driftnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic per-site reference and test predictions as CSV.
    Datagen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Existing output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the simulation grid.
    Run {
        /// Configuration file or manifest of an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Comma-separated scheme names.
        #[arg(long)]
        schemes: Option<String>,
        #[arg(long, env = "DRIFTNET_THREADS")]
        threads: Option<usize>,
    },
    /// Export plot data and tables of a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_list(schemes: Option<String>) -> Result<Option<Vec<SchemeKind>>, CliError> {
    schemes
        .map(|s| parse_schemes(&s).map_err(|e| CliError::Invalid(format!("--schemes: {e}"))))
        .transpose()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Datagen { config, out, seed } => (|| {
            let mut config = match config {
                Some(path) => load_config(&path)?,
                None => SimConfig::default(),
            };
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            for path in cmd_datagen(&config, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        })(),
        Command::Run {
            config,
            out,
            seed,
            replicates,
            schemes,
            threads,
        } => parse_list(schemes).and_then(|schemes| {
            cmd_run(&RunOptions {
                config,
                out_dir: out.clone(),
                overrides: Overrides {
                    seed,
                    replicates,
                    schemes,
                    threads,
                },
            })
            .map(|summary| {
                println!("wrote {} cells to {}", summary.cells.len(), out.display());
            })
        }),
        Command::Report { out } => cmd_report(&out).map(|paths| {
            for path in paths {
                println!("{}", path.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

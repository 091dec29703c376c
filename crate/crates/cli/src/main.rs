use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvmech_cli::{run_config_file, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "nvmech",
    version,
    about = "Mechanically driven NV spin resonance simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write `<stem>.csv` and `<stem>.json`.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verbose: bool,
    },
    /// List the experiment kinds a config may name.
    ListExperiments,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<22}{}", k.name(), k.description());
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            verbose,
        } => match run_config_file(&config, out.as_deref(), seed) {
            Ok((files, result)) => {
                for w in &result.warnings {
                    eprintln!("warning: {w}");
                }
                if verbose {
                    eprintln!("{} rows -> {}", result.table.len(), files.csv.display());
                    eprintln!("metadata -> {}", files.json.display());
                    for (k, v) in &result.derived {
                        eprintln!("  {k} = {v}");
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}

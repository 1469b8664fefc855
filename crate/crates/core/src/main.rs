use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pnph::config::RunConfig;
use pnph::geometry::{preset_keys, PRESETS};

/// Homogenized Poisson-Nernst-Planck toolkit.
#[derive(Parser)]
#[command(name = "pnph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.directory`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// List geometry presets and their parameters.
    Presets,
}

fn fail(e: pnph::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for name in PRESETS {
                println!("{name}: {}", preset_keys(name).join(", "));
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match RunConfig::load(&config).and_then(|c| c.validate()) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run { config, out } => {
            let result = RunConfig::load(&config).and_then(|c| pnph::pipeline::run(&c, out.as_deref()));
            match result {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}

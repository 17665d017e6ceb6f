use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oulcut_cli::{describe, run, Overrides};

#[derive(Parser)]
#[command(name = "oulcut", version, about = "Cut-off experiments for Lévy-driven OU processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (default: config `out_dir`, then $OULCUT_OUT_ROOT/<config stem>, then out/<config stem>)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Replace the config seed
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV, plot data and manifest.json
    Run { config: PathBuf },
    /// Print the resolved plan without running or writing anything
    Describe { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides {
        out_dir: cli.out_dir,
        seed: cli.seed_override,
        workers: cli.workers,
    };
    let res = match &cli.command {
        Command::Run { config } => run(config, &ov).map(|m| {
            for a in &m.outputs {
                println!("{}  {}", a.sha256, a.file);
            }
            println!("passed: {}", m.passed);
        }),
        Command::Describe { config } => describe(config, &ov).map(|s| println!("{s}")),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}

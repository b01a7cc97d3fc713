use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use otmap::Profile;
use otmap_cli::run::{run, RunOptions};
use otmap_cli::table::table;

/// Optimal transport map estimation experiments.
#[derive(Parser)]
#[command(name = "otmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Fast,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every experiment block of a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override every block's profile.
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
        /// Worker threads; defaults to $OTMAP_THREADS, then the config, then all cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Overwrite existing output files.
        #[arg(long)]
        force: bool,
    },
    /// Summarize result files into one row per experiment cell.
    Table {
        #[arg(long)]
        glob: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            profile,
            threads,
            force,
        } => run(&RunOptions {
            config,
            out,
            profile: profile.map(|p| match p {
                ProfileArg::Paper => Profile::Paper,
                ProfileArg::Fast => Profile::Fast,
            }),
            threads,
            force,
        })
        .map(|_| ()),
        Command::Table { glob, out } => table(&glob, &out).map(|cells| eprintln!("{cells} cells -> {}", out.display())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

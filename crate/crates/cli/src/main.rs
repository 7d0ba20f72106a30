use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holekp_cli::config::{Command, RunConfig};
use holekp_cli::{execute, thread_count, RunError};

#[derive(Parser)]
#[command(name = "holekp", version, about = "Six-band k.p hole spin qubit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to HOLEKP_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenstates and their characterization at one operating point.
    Solve(Common),
    /// One row per point along a single swept parameter.
    Sweep(Common),
    /// Principal g factors, optimal angles and angular maps.
    Gmatrix(Common),
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (command, common) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Gmatrix(c) => (Command::GMatrix, c),
    };
    let env = std::env::var("HOLEKP_THREADS").ok();
    let threads = thread_count(common.threads, env.as_deref())?;
    let cfg = RunConfig::load(&common.config)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Output(std::io::Error::other(e.to_string())))?;
    pool.install(|| execute(command, &cfg, common.out.as_deref()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

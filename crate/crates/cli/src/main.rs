//! `reactid`: forward solves, reconstructions and `(T, α)` sweeps driven by a
//! TOML experiment file.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::Failure;
use config::Config;

#[derive(Parser)]
#[command(
    name = "reactid",
    version,
    about = "Reaction-term identification from final-time data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve with the configured truth; writes g.csv and history.csv.
    Solve(Common),
    /// Recover f from final-time data; writes trace.csv and f_recon.csv.
    Reconstruct(Common),
    /// One iteration per (T, alpha) cell; writes sweep.csv.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for sweep cells and Jacobian columns.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load(common: &Common) -> Result<Config, Failure> {
    let mut cfg = Config::load(&common.config)?;
    if let Ok(seed) = std::env::var("REACTID_SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("REACTID_SEED is not an unsigned integer: {seed:?}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, which) = match &cli.command {
        Command::Solve(c) => (c, "solve"),
        Command::Reconstruct(c) => (c, "reconstruct"),
        Command::Sweep(c) => (c, "sweep"),
    };
    let cfg = load(common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Failure::Solver(e.to_string()))?;
    let out = &common.out;
    pool.install(|| match which {
        "solve" => commands::solve(&cfg, out).map(|_| ()),
        "reconstruct" => commands::reconstruct(&cfg, out).map(|_| ()),
        _ => {
            let rows = commands::sweep(&cfg, out)?;
            let failed = rows.iter().filter(|r| r.2.is_nan()).count();
            if failed > 0 {
                eprintln!("{failed} of {} sweep cells failed", rows.len());
            }
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reactid: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

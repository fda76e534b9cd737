use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ho_lab::{ExperimentSpec, Mode};

#[derive(Parser)]
#[command(name = "holab", version, about = "Run handover-control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write its artifacts.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; defaults to the spec's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds replacing the spec's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        mode: Option<Mode>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run {
        spec,
        out,
        seeds,
        mode,
    } = Cli::parse().command;
    let result = (|| {
        let mut s = ExperimentSpec::load(&spec)?;
        if let Some(seeds) = seeds {
            s.seeds = seeds;
        }
        if let Some(mode) = mode {
            s.mode = mode;
        }
        let out = out
            .or_else(|| s.out.clone())
            .ok_or_else(|| ho_lab::LabError::spec("field `out`", "no output directory given"))?;
        let artifacts = ho_lab::run(&s, &out)?;
        println!(
            "{:<20} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "controller", "runs", "p50", "p90", "p95", "p99", "loss"
        );
        for r in &artifacts.table {
            println!(
                "{:<20} {:>5} {:>8.1} {:>8.1} {:>8.1} {:>8.1} {:>8.4}",
                r.controller, r.runs, r.p50_ms, r.p90_ms, r.p95_ms, r.p99_ms, r.loss_rate
            );
        }
        println!(
            "artifacts in {} (config {})",
            artifacts.dir.display(),
            &artifacts.config_hash[..12]
        );
        Ok::<_, ho_lab::LabError>(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

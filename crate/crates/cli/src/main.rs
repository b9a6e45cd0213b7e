use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

#[derive(Parser)]
#[command(name = "mpc-pacing", version, about = "Simulate MPC-paced flows over a shared bottleneck")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file (TOML or JSON).
    Run {
        /// Built-in name (single, table1-uncapped, table1-capped,
        /// table2-uncapped, table2-capped, sweep) or a path.
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the buffer-size sweep grid.
    Sweep {
        /// BDP fractions, comma separated. Defaults to 1/16 ... 16.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Flow counts, comma separated. Defaults to 1,2,4,8.
        #[arg(long, value_delimiter = ',')]
        flows: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute summary statistics from a trace CSV.
    Report {
        /// Trace written by `run` (`<name>.trace.csv`).
        trace: PathBuf,
        /// Window start, seconds.
        #[arg(long, default_value_t = 0.0)]
        warmup: f64,
        /// Window end, seconds. Defaults to the end of the trace.
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Overrides the scenario's noise seed (0 for built-ins).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds. The warmup scales along unless given.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Seconds excluded from statistics.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, common } => commands::run(&scenario, &common),
        Command::Sweep {
            fractions,
            flows,
            common,
        } => commands::sweep(fractions, flows, &common),
        Command::Report {
            trace,
            warmup,
            duration,
        } => commands::report(&trace, warmup, duration),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

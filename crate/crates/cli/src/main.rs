mod commands;
mod config;
mod error;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Monte Carlo simulation and analysis of spin-wave photon-pair Bell tests.
#[derive(Parser)]
#[command(name = "spinwave", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trials and write a JSON-lines event log.
    Simulate {
        /// Run configuration; the built-in default is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Override run.trials_per_point.
        #[arg(long)]
        trials: Option<u64>,
        /// Event log path [default: $SPINWAVE_OUT_DIR/events.jsonl].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate visibilities, CHSH S and retrieval from an event log.
    Analyze {
        events: PathBuf,
        /// Output directory [default: $SPINWAVE_OUT_DIR/report].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model to a two-column CSV series (t in µs, y).
    Fit {
        series: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
        /// Fit result JSON [default: $SPINWAVE_OUT_DIR/fit-<model>.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a figure or table and check it against reference values.
    Reproduce {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Trials per point; each target has its own default.
        #[arg(long)]
        trials: Option<u64>,
        /// Output directory [default: $SPINWAVE_OUT_DIR/<target>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FitModel {
    Sinusoid,
    VisibilityDecay,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sinusoid => "sinusoid",
            Self::VisibilityDecay => "visibility-decay",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Target {
    Fig2,
    Fig3a,
    Fig3b,
    Table1,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3a => "fig3a",
            Self::Fig3b => "fig3b",
            Self::Table1 => "table1",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            trials,
            out,
        } => commands::simulate(config.as_deref(), seed, trials, out),
        Command::Analyze { events, out } => commands::analyze(&events, out),
        Command::Fit { series, model, out } => commands::fit(&series, model, out),
        Command::Reproduce {
            target,
            config,
            seed,
            trials,
            out,
        } => commands::reproduce(target, config.as_deref(), seed, trials, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

//! screenflow: scenario-driven cargo-screening simulator and analyzer.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use screenflow_core::experiments::EventMetric;
use screenflow_core::tree::DEFAULT_NODE_CAP;

use commands::{BoundsArgs, CliError, RunArgs, SweepArgs, TreeArgs};

#[derive(Parser)]
#[command(
    name = "screenflow",
    version,
    about = "Discrete-event simulation and exact decision-tree analysis of cargo-screening pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run R replications and write replications.csv / summary.csv.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of replications.
        #[arg(long, value_name = "N", default_value_t = 10)]
        replications: usize,
        /// Worker threads (0 = all cores).
        #[arg(long, value_name = "N", env = "SCREENFLOW_WORKERS", default_value_t = 0)]
        workers: usize,
        /// Confidence level for summary intervals.
        #[arg(long, value_name = "F", default_value_t = 0.95)]
        confidence: f64,
    },
    /// Compile the exact decision tree and write tree.txt / expectation.csv.
    Tree {
        #[command(flatten)]
        common: CommonArgs,
        /// Abort if the tree exceeds this many nodes.
        #[arg(long, value_name = "N", default_value_t = DEFAULT_NODE_CAP)]
        node_cap: usize,
    },
    /// Sweep a numeric parameter and compare simulation with the tree.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dot path of the swept field, e.g. stages.british.check_probability.
        #[arg(long, value_name = "PATH")]
        param: String,
        /// First value (inclusive).
        #[arg(long, value_name = "F")]
        from: f64,
        /// Last value (inclusive).
        #[arg(long, value_name = "F")]
        to: f64,
        /// Number of equally spaced values.
        #[arg(long, value_name = "N")]
        steps: usize,
        /// Replications per value.
        #[arg(long, value_name = "N", default_value_t = 10)]
        replications: usize,
        /// Worker threads (0 = all cores).
        #[arg(long, value_name = "N", env = "SCREENFLOW_WORKERS", default_value_t = 0)]
        workers: usize,
        /// Significance level of the per-value agreement test.
        #[arg(long, value_name = "F", default_value_t = 0.01)]
        alpha: f64,
        /// Reuse the same random substreams for every swept value.
        #[arg(long, default_value_t = false)]
        crn: bool,
    },
    /// Judge whether simulation, the exact tree, or neither fits the budget.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Target relative CI half-width for the event probability.
        #[arg(long, value_name = "F", default_value_t = 0.1)]
        epsilon: f64,
        /// Confidence level of the target interval.
        #[arg(long, value_name = "F", default_value_t = 0.95)]
        confidence: f64,
        /// Replication budget.
        #[arg(long, value_name = "N")]
        budget: u64,
        /// Event of interest: carrier, undetected_carrier, detected, false_alarm.
        #[arg(long, value_name = "NAME", default_value = "carrier")]
        metric: String,
        /// Tree size above which the analytic route is impractical.
        #[arg(long, value_name = "N", default_value_t = DEFAULT_NODE_CAP)]
        node_cap: usize,
    },
    /// Parse and validate a scenario file, reporting every violation.
    Validate {
        /// Scenario JSON file.
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, replications, workers, confidence } => commands::cmd_run(&RunArgs {
            scenario: common.scenario,
            replications,
            seed: common.seed,
            out: common.out,
            workers,
            confidence,
        }),
        Command::Tree { common, node_cap } => commands::cmd_tree(&TreeArgs {
            scenario: common.scenario,
            out: common.out,
            node_cap,
            seed: common.seed,
        }),
        Command::Sweep {
            common,
            param,
            from,
            to,
            steps,
            replications,
            workers,
            alpha,
            crn,
        } => commands::cmd_sweep(&SweepArgs {
            scenario: common.scenario,
            param,
            from,
            to,
            steps,
            replications,
            seed: common.seed,
            out: common.out,
            workers,
            alpha,
            crn,
        }),
        Command::Bounds { common, epsilon, confidence, budget, metric, node_cap } => {
            let metric: EventMetric = metric.parse().map_err(CliError::Domain)?;
            commands::cmd_bounds(&BoundsArgs {
                scenario: common.scenario,
                epsilon,
                confidence,
                budget,
                metric,
                node_cap,
                seed: common.seed,
                out: common.out,
            })
        }
        Command::Validate { scenario } => commands::cmd_validate(&scenario),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}

//! `relay`: calibrate budgets, evaluate policies, record rollouts, compare
//! runs and draw figures.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 missing or stale calibration, 4 external policy protocol failure.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relay_core::policy::{ActionMode, Encoding};
use relay_core::Scenario;

use commands::{Failure, Outcome};
use config::{parse_agents, parse_scenarios, Overrides, PolicyKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "relay",
    version,
    about = "Message relay game: budgets, evaluation and figures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the terminal budget table for each agent count.
    Calibrate(RunArgs),
    /// Evaluate a policy on seeded episodes for each scenario and agent count.
    Evaluate(RunArgs),
    /// Run a single seeded episode and write its trajectory log.
    Rollout {
        #[command(flatten)]
        run: RunArgs,
        /// Episode index under the master seed.
        #[arg(long, default_value_t = 0)]
        episode: u64,
    },
    /// Pair two results files episode by episode.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Draw budget curves, value histograms, paired scatter plots and trajectories.
    Plot {
        /// Directory with budget tables.
        #[arg(long)]
        budgets: Option<PathBuf>,
        /// Results files; every pair of them also gets a scatter plot.
        #[arg(long = "results")]
        results: Vec<PathBuf>,
        /// Trajectory logs.
        #[arg(long = "trajectory")]
        trajectories: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `all` or comma-separated names among iso-nojam, iso-jam, dir-nojam, dir-jam.
    #[arg(long, value_parser = parse_scenarios)]
    scenario: Option<::std::vec::Vec<Scenario>>,
    /// Agent counts, e.g. `3`, `1,3,5` or `1..=9`.
    #[arg(long, value_parser = parse_agents)]
    agents: Option<::std::vec::Vec<usize>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    c_time: Option<f64>,
    /// baseline | external
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Command line of the external policy; implies `--policy external`.
    #[arg(long)]
    policy_cmd: Option<String>,
    /// relative-sorted | shifted
    #[arg(long)]
    encoding: Option<Encoding>,
    /// discrete | continuous
    #[arg(long)]
    action_mode: Option<ActionMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of budget tables.
    #[arg(long)]
    budgets: Option<PathBuf>,
    /// Write a trajectory log per episode.
    #[arg(long)]
    record: bool,
    /// Worker threads (0: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Failure> {
        let mut config = RunConfig::load(self.config.as_deref()).map_err(Failure::config)?;
        let policy = match (&self.policy, &self.policy_cmd) {
            (None, Some(_)) => Some(PolicyKind::External),
            (p, _) => *p,
        };
        config.apply(Overrides {
            scenarios: self.scenario,
            agents: self.agents,
            episodes: self.episodes,
            seed: self.seed,
            c_time: self.c_time,
            policy,
            policy_cmd: self.policy_cmd,
            encoding: self.encoding,
            action_mode: self.action_mode,
            out: self.out,
            budgets: self.budgets,
            record: self.record,
            workers: self.workers,
        });
        config.validate().map_err(Failure::config)?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Calibrate(args) => commands::calibrate(&args.resolve()?),
        Command::Evaluate(args) => commands::evaluate(&args.resolve()?),
        Command::Rollout { run, episode } => commands::rollout(&run.resolve()?, episode),
        Command::Compare { a, b, out } => commands::compare(&a, &b, &out),
        Command::Plot {
            budgets,
            results,
            trajectories,
            out,
        } => {
            let inputs = plot::PlotInputs {
                budgets,
                results,
                trajectories,
            };
            for path in plot::plot_all(&inputs, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

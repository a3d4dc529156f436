//! Configuration-driven front end: every subcommand reads one JSON config,
//! writes its artifacts under a run directory named by the config hash and
//! reports checks through the exit code.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod golden;
pub mod run;

use config::ExperimentConfig;
use run::{RunError, RunRecord, EXIT_CHECK_FAILED, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "netdiff",
    version,
    about = "Reproducible experiments on interacting diffusions over graphs",
    after_help = "Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error, 3 numerical failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON); optional for reproduce-paper
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory that receives the run directories
    #[arg(long, global = true, value_name = "DIR", default_value = "runs")]
    pub out: PathBuf,
    /// Seed overriding the config's `seed`
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Replica count overriding the config's `replicas`
    #[arg(long, global = true, value_name = "N")]
    pub replicas: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Boundaries, cliques, square graph and truncations of the graph
    Graph,
    /// Exact covariance, precision and conditional tables of the linear system
    Gaussian,
    /// Simulate the interacting or driftless system and store the ensemble
    Simulate,
    /// Check that the Girsanov weights average to one
    GirsanovCheck,
    /// Scan first- and second-order Markov properties
    CiScan,
    /// Convergence of truncated systems in a fixed window
    Approx,
    /// Discrete factorization, projection, search and specification suites
    HcLab,
    /// Recompute the golden table and print a pass/fail line per entry
    ReproducePaper,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Graph => "graph",
            Self::Gaussian => "gaussian",
            Self::Simulate => "simulate",
            Self::GirsanovCheck => "girsanov-check",
            Self::CiScan => "ci-scan",
            Self::Approx => "approx",
            Self::HcLab => "hc-lab",
            Self::ReproducePaper => "reproduce-paper",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(file), _) => ExperimentConfig::load(file)?,
        (None, Command::ReproducePaper) => serde_json::from_str("{}").expect("empty config is valid"),
        (None, _) => return Err(RunError::Config("--config is required for this command".into())),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.replicas.is_some() {
        cfg.replicas = cli.replicas;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line and writes the run directory.
pub fn execute(cli: &Cli) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let cfg = load(cli)?;
    let (canonical, outcome) = match cli.command {
        Command::ReproducePaper => golden::reproduce(&cfg)?,
        command => {
            let canonical = serde_json::to_value(&cfg).map_err(|e| RunError::Config(e.to_string()))?;
            (canonical, commands::dispatch(command, &cfg)?)
        }
    };
    run::write_run(&cli.out, cli.command.name(), &canonical, outcome, started)
}

/// Parses arguments, runs and prints; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(record) => {
            for line in &record.outcome.summary {
                println!("{line}");
            }
            for c in &record.outcome.checks {
                println!("check {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("run directory: {}", record.dir.display());
            if record.outcome.passed() {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

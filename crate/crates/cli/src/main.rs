//! `incidence`: reproducible runs of the payroll-tax incidence toolkit.
//!
//! Exit status is 0 on success, 1 for a bad flag, config or input file, and 2
//! when a solver or estimator fails.

mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use output::Manifest;
use run::{Failure, Outcome};

#[derive(Parser)]
#[command(name = "incidence", version, about = "Payroll-tax incidence under monopsony")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take their defaults, unknown keys are rejected
    #[arg(long, global = true, env = "INCIDENCE_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, env = "INCIDENCE_OUT", default_value = "out")]
    out: PathBuf,

    /// Master seed for data generation, search starts and placebo draws
    #[arg(long, global = true, env = "INCIDENCE_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = one per core); results do not depend on it
    #[arg(long, global = true, env = "INCIDENCE_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Firm model: equilibrium, elasticities, competitive limits
    #[command(subcommand)]
    Economy(EconomyCmd),
    /// Minimum-distance fit and the substitution-elasticity sweep
    #[command(subcommand)]
    Cmd(CmdCmd),
    /// Synthetic firm and worker panels
    #[command(subcommand)]
    Panel(PanelCmd),
    /// Reform estimators on a panel CSV
    #[command(subcommand)]
    Estimate(EstimateCmd),
    /// Plots from earlier CSV artifacts
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum EconomyCmd {
    Solve,
    Elasticities,
    Limits,
}

#[derive(Subcommand)]
enum CmdCmd {
    Fit,
    Sweep,
}

#[derive(Subcommand)]
enum PanelCmd {
    Generate,
}

#[derive(Args)]
struct DataArg {
    /// Panel CSV; overrides `data` in the config
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EstimateCmd {
    Did(DataArg),
    EventStudy(DataArg),
    MatchDid(DataArg),
    Balance(DataArg),
}

#[derive(Subcommand)]
enum ReportCmd {
    Plot {
        /// Sweep or event-study CSV; overrides `input` in the config
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn dispatch(command: &Command, common: &Common) -> (String, Outcome) {
    let cfg = common.config.as_deref();
    let seed = common.seed;
    let data = |d: &DataArg| d.data.clone();
    match command {
        Command::Economy(EconomyCmd::Solve) => ("economy solve".into(), run::economy_solve(cfg)),
        Command::Economy(EconomyCmd::Elasticities) => ("economy elasticities".into(), run::economy_elasticities(cfg)),
        Command::Economy(EconomyCmd::Limits) => ("economy limits".into(), run::economy_limits(cfg)),
        Command::Cmd(CmdCmd::Fit) => ("cmd fit".into(), run::cmd_fit(cfg, seed)),
        Command::Cmd(CmdCmd::Sweep) => ("cmd sweep".into(), run::cmd_sweep(cfg)),
        Command::Panel(PanelCmd::Generate) => ("panel generate".into(), run::panel_generate(cfg, seed)),
        Command::Estimate(EstimateCmd::Did(d)) => ("estimate did".into(), run::estimate_did(cfg, data(d).as_deref())),
        Command::Estimate(EstimateCmd::EventStudy(d)) => (
            "estimate event-study".into(),
            run::estimate_event_study(cfg, data(d).as_deref()),
        ),
        Command::Estimate(EstimateCmd::MatchDid(d)) => (
            "estimate match-did".into(),
            run::estimate_match_did(cfg, data(d).as_deref(), seed),
        ),
        Command::Estimate(EstimateCmd::Balance(d)) => (
            "estimate balance".into(),
            run::estimate_balance(cfg, data(d).as_deref()),
        ),
        Command::Report(ReportCmd::Plot { input }) => ("report plot".into(), run::report_plot(cfg, input.as_deref())),
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    if common.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.workers)
            .build_global()
            .map_err(|e| Failure::Run(format!("thread pool: {e}")))?;
    }
    let (command, outcome) = dispatch(&cli.command, common);
    let (config, artifacts) = outcome?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: common.seed,
        workers: common.workers,
        config_path: common.config.clone(),
        config,
        artifacts: artifacts.names(),
    };
    artifacts.commit(Path::new(&common.out), &manifest)?;
    log::info!(
        "wrote {} artifacts to {}",
        manifest.artifacts.len() + 1,
        common.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

//! Command-line front end for `ensgate-core`.
//!
//! Every subcommand reads defaults, then an optional TOML or JSON config
//! file, then `ENSGATE_*` environment variables and flags. The resolved
//! config is echoed into the report so a run can be replayed from it.
//!
//! Exit status: 0 success, 1 a checked invariant failed, 2 bad usage or
//! configuration, 3 runtime failure such as an unreachable proposer.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::{config_echo, execute, CommandName};
use crate::config::{Format, ProposerKind, RunConfig};
use crate::error::{exit_status, CliError};
use crate::report::{emit, render, ReportEnvelope, Timing, TOOL_VERSION};

#[derive(Debug, Parser)]
#[command(name = "ensgate", version, about = "Ensemble error gates: verification, sweeps and monotonic search")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML or JSON config file.
    #[arg(long, global = true, env = "ENSGATE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true, env = "ENSGATE_SEED")]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, env = "ENSGATE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "ENSGATE_FORMAT")]
    pub format: Option<Format>,
    /// Monte-Carlo trials for verify-theory, replications for estimate-fidelity.
    #[arg(long, global = true, env = "ENSGATE_TRIALS")]
    pub trials: Option<usize>,
    #[arg(long, global = true, value_enum, env = "ENSGATE_PROPOSER")]
    pub proposer: Option<ProposerKind>,
    #[arg(long, global = true, env = "ENSGATE_PROPOSER_URL")]
    pub proposer_url: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo check of the error decomposition and both gates.
    VerifyTheory,
    /// Optimal bagging sample ratio, sweep and monotonicity check.
    OptimizeAlpha,
    /// Proxy-training cost of decoupled versus full-ensemble evaluation.
    Cost,
    /// Gated monotonic search over proposed candidates.
    Search,
    /// Constrained continuous optimization on a surrogate.
    Surrogate(SurrogateArgs),
    /// Bias and RMSE of the dual-proxy estimators, plus gate quality.
    EstimateFidelity,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    /// bagging-1d, bagging-1d-infeasible or table.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of multistart points.
    #[arg(long)]
    pub starts: Option<usize>,
}

impl Command {
    pub fn name(&self) -> CommandName {
        match self {
            Command::VerifyTheory => CommandName::VerifyTheory,
            Command::OptimizeAlpha => CommandName::OptimizeAlpha,
            Command::Cost => CommandName::Cost,
            Command::Search => CommandName::Search,
            Command::Surrogate(_) => CommandName::Surrogate,
            Command::EstimateFidelity => CommandName::EstimateFidelity,
        }
    }
}

/// Resolves defaults, config file and overrides into one config.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = g.format {
        cfg.format = format;
    }
    if let Some(trials) = g.trials {
        cfg.verify_theory.trials = trials;
        cfg.estimate_fidelity.reps = trials;
    }
    if let Some(p) = g.proposer {
        cfg.search.proposer = p;
    }
    if let Some(url) = &g.proposer_url {
        cfg.search.proposer_url = Some(url.clone());
    }
    if let Command::Surrogate(s) = &cli.command {
        if let Some(preset) = &s.preset {
            cfg.surrogate.preset = preset.clone();
        }
        if let Some(starts) = s.starts {
            cfg.surrogate.options.starts = starts;
        }
    }
    Ok(cfg)
}

/// Runs a parsed command and writes its report. Returns the exit status.
pub fn run_cli(cli: &Cli) -> Result<u8, CliError> {
    let cfg = resolve(cli)?;
    let cmd = cli.command.name();
    let started = Instant::now();
    let output = execute(cmd, &cfg)?;
    let envelope = ReportEnvelope {
        tool_version: TOOL_VERSION.to_string(),
        command: cmd.as_str().to_string(),
        config: config_echo(cmd, &cfg)?,
        timing: Timing {
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
        results: output.results,
    };
    emit(&render(&envelope, &output.table, cfg.format)?, cfg.out.as_deref())?;
    if output.passed {
        Ok(0)
    } else {
        eprintln!("ensgate {}: invariant check failed", cmd.as_str());
        Ok(1)
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return exit_status(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run_cli(&cli) {
        Ok(code) => exit_status(code),
        Err(e) => {
            eprintln!("ensgate: {e}");
            exit_status(e.exit_code())
        }
    }
}

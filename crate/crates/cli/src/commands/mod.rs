mod cost;
mod estimate_fidelity;
mod optimize_alpha;
mod search;
mod surrogate;
mod verify_theory;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::Table;

pub use cost::cost;
pub use estimate_fidelity::estimate_fidelity;
pub use optimize_alpha::optimize_alpha;
pub use search::search;
pub use surrogate::surrogate;
pub use verify_theory::verify_theory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    VerifyTheory,
    OptimizeAlpha,
    Cost,
    Search,
    Surrogate,
    EstimateFidelity,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::VerifyTheory => "verify-theory",
            CommandName::OptimizeAlpha => "optimize-alpha",
            CommandName::Cost => "cost",
            CommandName::Search => "search",
            CommandName::Surrogate => "surrogate",
            CommandName::EstimateFidelity => "estimate-fidelity",
        }
    }

    /// Config section read by the command.
    pub fn section(self) -> &'static str {
        match self {
            CommandName::VerifyTheory => "verify_theory",
            CommandName::OptimizeAlpha => "optimize_alpha",
            CommandName::Cost => "cost",
            CommandName::Search => "search",
            CommandName::Surrogate => "surrogate",
            CommandName::EstimateFidelity => "estimate_fidelity",
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Output {
    pub results: Value,
    pub table: Table,
    /// `false` when an invariant the command checks did not hold.
    pub passed: bool,
}

pub(crate) fn to_value<T: Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::Runtime(format!("cannot serialize results: {e}")))
}

/// Checks the command's config section; failures map to exit status 2.
pub fn validate(cmd: CommandName, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        CommandName::VerifyTheory => cfg.verify_theory.validate(cfg.seed),
        CommandName::OptimizeAlpha => cfg.optimize_alpha.validate(),
        CommandName::Cost => cfg.cost.model().map(|_| ()),
        CommandName::Search => cfg.search.validate(),
        CommandName::Surrogate => cfg.surrogate.validate(),
        CommandName::EstimateFidelity => cfg.estimate_fidelity.validate(cfg.seed),
    }
}

pub fn execute(cmd: CommandName, cfg: &RunConfig) -> Result<Output, CliError> {
    validate(cmd, cfg)?;
    match cmd {
        CommandName::VerifyTheory => verify_theory(&cfg.verify_theory, cfg.seed),
        CommandName::OptimizeAlpha => optimize_alpha(&cfg.optimize_alpha),
        CommandName::Cost => cost(&cfg.cost),
        CommandName::Search => search(&cfg.search, cfg.seed),
        CommandName::Surrogate => surrogate(&cfg.surrogate, cfg.seed),
        CommandName::EstimateFidelity => estimate_fidelity(&cfg.estimate_fidelity, cfg.seed),
    }
}

/// The part of the resolved config a command depends on, in a form that is
/// itself a valid config file.
pub fn config_echo(cmd: CommandName, cfg: &RunConfig) -> Result<Value, CliError> {
    let section = match cmd {
        CommandName::VerifyTheory => to_value(&cfg.verify_theory)?,
        CommandName::OptimizeAlpha => to_value(&cfg.optimize_alpha)?,
        CommandName::Cost => to_value(&cfg.cost)?,
        CommandName::Search => to_value(&cfg.search)?,
        CommandName::Surrogate => to_value(&cfg.surrogate)?,
        CommandName::EstimateFidelity => to_value(&cfg.estimate_fidelity)?,
    };
    let mut echo = json!({
        "seed": cfg.seed,
        "format": cfg.format,
        "out": cfg.out,
    });
    echo[cmd.section()] = section;
    Ok(echo)
}

use ensgate_core::CostModel;
use serde::Serialize;

use super::{to_value, Output};
use crate::config::CostConfig;
use crate::error::CliError;
use crate::report::{Cell, Table};

#[derive(Debug, Serialize)]
struct SweepRow {
    n_trials: u64,
    traditional: f64,
    decoupled: f64,
    reduction_factor: f64,
}

#[derive(Debug, Serialize)]
struct CostResults {
    traditional: f64,
    decoupled: f64,
    reduction_factor: f64,
    /// Limit of the reduction factor as the number of trials grows.
    asymptote: f64,
    sweep: Vec<SweepRow>,
}

pub fn cost(cfg: &CostConfig) -> Result<Output, CliError> {
    let model = cfg.model()?;
    let mut sweep = Vec::new();
    let mut n: u64 = 1;
    for decade in 0..=cfg.sweep_decades {
        let m = CostModel { n_trials: n, ..model };
        sweep.push(SweepRow {
            n_trials: n,
            traditional: m.traditional(),
            decoupled: m.decoupled(),
            reduction_factor: m.reduction_factor(),
        });
        if decade < cfg.sweep_decades {
            n = n.checked_mul(10).ok_or_else(|| CliError::Config("cost.sweep_decades too large".into()))?;
        }
    }
    let results = CostResults {
        traditional: model.traditional(),
        decoupled: model.decoupled(),
        reduction_factor: model.reduction_factor(),
        asymptote: model.ensemble_size as f64 * model.c_learner / (model.c_learner + model.c_est),
        sweep,
    };
    let mut table = Table::new(&["n_trials", "traditional", "decoupled", "reduction_factor"]);
    for r in &results.sweep {
        table.push(vec![
            Cell::from(r.n_trials),
            r.traditional.into(),
            r.decoupled.into(),
            r.reduction_factor.into(),
        ]);
    }
    Ok(Output {
        results: to_value(&results)?,
        table,
        passed: true,
    })
}

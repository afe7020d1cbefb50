use ensgate_core::bagging::BaggingModel;
use ensgate_core::search::surrogate::{
    surrogate_optimize, BaggingSurrogate, SurrogateOptions, SurrogateResult, TableSurrogate,
};
use ensgate_core::{ArchitectureStats, EnsembleSpec};
use serde::Serialize;

use super::{to_value, Output};
use crate::config::{read_table, SurrogateConfig};
use crate::error::CliError;
use crate::report::{Cell, Table};

#[derive(Debug, Serialize)]
struct ClosedForm {
    alpha_star: f64,
    minimal_error: f64,
    alpha_error: f64,
}

#[derive(Debug, Serialize)]
struct SurrogateResults {
    preset: String,
    baseline: ArchitectureStats,
    bounds: Vec<(f64, f64)>,
    point: Vec<f64>,
    feasible: bool,
    ensemble_error: f64,
    /// `threshold − ρ̂` at the returned point; positive iff feasible.
    margin: f64,
    best_start: usize,
    /// Present for the bagging presets, whose optimum is known in closed form.
    closed_form: Option<ClosedForm>,
    history: Vec<ensgate_core::search::surrogate::StartOutcome>,
}

/// A family whose candidates are all strictly worse than the baseline: steep
/// error curvature, almost no decorrelation, and a baseline error shifted
/// down by 0.01.
pub fn infeasible_surrogate(model: &BaggingModel, ens: EnsembleSpec) -> Result<BaggingSurrogate, CliError> {
    let steep = BaggingModel::new(model.e_base, 50.0, -1e-3, model.rho0, model.variance)?;
    let mut s = BaggingSurrogate::new(steep, ens, 1.0)?;
    s.baseline.expected_error -= 0.01;
    Ok(s)
}

pub fn surrogate(cfg: &SurrogateConfig, seed: u64) -> Result<Output, CliError> {
    let ens = EnsembleSpec::new(cfg.ensemble_size)?;
    let opts = SurrogateOptions { seed, ..cfg.options };
    let (result, baseline, bounds, closed_form): (SurrogateResult, _, _, _) = match cfg.preset.as_str() {
        "bagging-1d" => {
            let s = BaggingSurrogate::new(cfg.model, ens, cfg.alpha_old)?;
            let p = s.problem(cfg.lower_bound);
            let r = surrogate_optimize(&p, ens, &opts)?;
            let alpha_star = cfg.model.optimal_alpha(ens)?;
            let closed = ClosedForm {
                alpha_star,
                minimal_error: cfg.model.minimal_ensemble_error(ens)?.minimal_error,
                alpha_error: (r.point[0] - alpha_star).abs(),
            };
            (r, s.baseline, p.bounds.clone(), Some(closed))
        }
        "bagging-1d-infeasible" => {
            let s = infeasible_surrogate(&cfg.model, ens)?;
            let p = s.problem(cfg.lower_bound);
            (surrogate_optimize(&p, ens, &opts)?, s.baseline, p.bounds.clone(), None)
        }
        "table" => {
            let path = cfg.table.as_ref().ok_or_else(|| CliError::Config("surrogate.table is required".into()))?;
            let rows = read_table(path)?;
            let x_old = match cfg.x_old {
                Some(x) => x,
                None => rows.iter().map(|r| r.x).fold(f64::NEG_INFINITY, f64::max),
            };
            let t = TableSurrogate::new(rows, ens, x_old)?;
            let p = t.problem();
            (surrogate_optimize(&p, ens, &opts)?, t.baseline, p.bounds.clone(), None)
        }
        other => return Err(CliError::Config(format!("unknown surrogate preset `{other}`"))),
    };

    let mut table = Table::new(&["start", "initial", "x", "ensemble_error", "constraint", "feasible", "iterations"]);
    for s in &result.history {
        table.push(vec![
            Cell::from(s.start_index),
            s.initial[0].into(),
            s.point[0].into(),
            s.ensemble_error.into(),
            s.constraint.into(),
            s.feasible.into(),
            Cell::from(s.iterations),
        ]);
    }
    let results = SurrogateResults {
        preset: cfg.preset.clone(),
        baseline,
        bounds,
        point: result.point,
        feasible: result.feasible,
        ensemble_error: result.ensemble_error,
        margin: result.margin,
        best_start: result.best_start,
        closed_form,
        history: result.history,
    };
    Ok(Output {
        results: to_value(&results)?,
        table,
        passed: true,
    })
}

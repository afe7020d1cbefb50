use ensgate_core::bagging::{dropout_gain_scale, CorrelationWarning, GainDecomposition};
use ensgate_core::EnsembleSpec;
use serde::Serialize;

use super::{to_value, Output};
use crate::config::OptimizeAlphaConfig;
use crate::error::CliError;
use crate::report::{Cell, Table};

#[derive(Debug, Serialize)]
struct SweepPoint {
    alpha: f64,
    ensemble_error: f64,
    error: f64,
    correlation: f64,
}

#[derive(Debug, Serialize)]
struct Argmin {
    index: usize,
    alpha: f64,
    ensemble_error: f64,
}

#[derive(Debug, Serialize)]
struct Verification {
    alpha_old: f64,
    /// `None` when `alpha_old` is the optimum itself.
    passed: Option<bool>,
}

#[derive(Debug, Serialize)]
struct DiminishingReturns {
    ensemble_size: usize,
    scale: f64,
    dropout_gain: f64,
}

#[derive(Debug, Serialize)]
struct AlphaResults {
    alpha_star: f64,
    beta_star: f64,
    correlation_at_optimum: f64,
    correlation_warning: Option<CorrelationWarning>,
    gains: GainDecomposition,
    sweep: Vec<SweepPoint>,
    sweep_argmin: Argmin,
    verification: Vec<Verification>,
    all_verified: bool,
    diminishing_returns: Vec<DiminishingReturns>,
}

pub fn optimize_alpha(cfg: &OptimizeAlphaConfig) -> Result<Output, CliError> {
    let model = cfg.model;
    let ens = EnsembleSpec::new(cfg.ensemble_size)?;
    let alpha_star = model.optimal_alpha(ens)?;
    let (_, correlation_warning) = model.model_stats_checked(alpha_star, ens)?;

    let sweep: Vec<SweepPoint> = model
        .sweep(ens, cfg.sweep_points)?
        .into_iter()
        .map(|(alpha, ensemble_error)| SweepPoint {
            alpha,
            ensemble_error,
            error: model.error_at(alpha),
            correlation: model.correlation_at(alpha),
        })
        .collect();
    let (index, best) = sweep
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.ensemble_error.total_cmp(&b.1.ensemble_error))
        .expect("at least one sweep point");
    let sweep_argmin = Argmin {
        index,
        alpha: best.alpha,
        ensemble_error: best.ensemble_error,
    };

    let mut verification = Vec::new();
    if cfg.ensemble_size >= 2 {
        for &alpha_old in &cfg.alpha_old {
            let passed = if alpha_old == alpha_star {
                None
            } else {
                Some(model.verify_monotonic_at_optimum(ens, alpha_old)?)
            };
            verification.push(Verification { alpha_old, passed });
        }
    }
    let all_verified = verification.iter().all(|v| v.passed != Some(false));

    let diminishing_returns = cfg
        .diminishing_sizes
        .iter()
        .map(|&m| {
            let e = EnsembleSpec::new(m)?;
            Ok(DiminishingReturns {
                ensemble_size: m,
                scale: dropout_gain_scale(e),
                dropout_gain: model.minimal_ensemble_error(e)?.dropout_gain,
            })
        })
        .collect::<Result<Vec<_>, ensgate_core::Error>>()?;

    let results = AlphaResults {
        alpha_star,
        beta_star: model.optimal_beta(ens)?,
        correlation_at_optimum: model.correlation_at(alpha_star),
        correlation_warning,
        gains: model.minimal_ensemble_error(ens)?,
        sweep,
        sweep_argmin,
        verification,
        all_verified,
        diminishing_returns,
    };
    let mut table = Table::new(&["alpha", "ensemble_error", "error", "correlation"]);
    for p in &results.sweep {
        table.push(vec![
            Cell::from(p.alpha),
            p.ensemble_error.into(),
            p.error.into(),
            p.correlation.into(),
        ]);
    }
    Ok(Output {
        results: to_value(&results)?,
        table,
        passed: results.all_verified,
    })
}

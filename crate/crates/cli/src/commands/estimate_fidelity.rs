use ensgate_core::estimator::{estimation_fidelity_report, FidelityReport};
use ensgate_core::search::{
    gate_quality, run_monotonic_search, GateQuality, RandomProposer, SearchSettings,
    SimulatedEvaluator,
};
use ensgate_core::seed::derive_seed;
use ensgate_core::EnsembleSpec;
use serde::Serialize;

use super::{to_value, Output};
use crate::config::EstimateFidelityConfig;
use crate::error::CliError;
use crate::report::{Cell, Table};

#[derive(Debug, Serialize)]
struct QualityRow {
    n: usize,
    runs: usize,
    quality: GateQuality,
}

#[derive(Debug, Serialize)]
struct FidelityResults {
    fidelity: FidelityReport,
    gate_quality: Vec<QualityRow>,
    /// Whether pooled accept precision rises strictly along `n_grid`.
    /// `None` when the sweep is disabled or a batch size saw no accepts.
    accept_precision_rising: Option<bool>,
}

fn quality_sweep(cfg: &EstimateFidelityConfig, seed: u64) -> Result<Vec<QualityRow>, CliError> {
    let q = &cfg.gate_quality;
    let ens = EnsembleSpec::new(cfg.ensemble_size)?;
    cfg.n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let evaluator = SimulatedEvaluator::new(n, cfg.label_model);
            let parts = (0..q.runs)
                .map(|run| {
                    let run_seed = derive_seed(seed, "gate-quality", (gi as u64) << 32 | run as u64);
                    let settings = SearchSettings::new(q.budget, q.bins, ens, run_seed);
                    let mut proposer = RandomProposer::new(q.random);
                    let trace = run_monotonic_search(q.baseline, &settings, &mut proposer, &evaluator)?;
                    Ok(gate_quality(&trace, &evaluator, ens).expect("simulated evaluator knows the truth"))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(QualityRow {
                n,
                runs: q.runs,
                quality: GateQuality::combine(&parts),
            })
        })
        .collect()
}

pub fn estimate_fidelity(cfg: &EstimateFidelityConfig, seed: u64) -> Result<Output, CliError> {
    let fidelity = estimation_fidelity_report(&cfg.sim_config(seed), &cfg.n_grid, cfg.reps)?;
    let gate_quality = if cfg.gate_quality.enabled {
        quality_sweep(cfg, seed)?
    } else {
        Vec::new()
    };
    let precisions: Option<Vec<f64>> = if gate_quality.is_empty() {
        None
    } else {
        gate_quality.iter().map(|r| r.quality.accept_precision).collect()
    };
    let accept_precision_rising = precisions.map(|p| p.windows(2).all(|w| w[0] < w[1]));

    let mut table = Table::new(&[
        "n", "estimator", "target", "nominal", "mean", "bias", "rmse", "nominal_bias", "samples",
    ]);
    for row in &fidelity.rows {
        for e in &row.estimators {
            table.push(vec![
                Cell::from(row.n),
                e.estimator.as_str().into(),
                e.target.into(),
                e.nominal.into(),
                e.mean.into(),
                e.bias.into(),
                e.rmse.into(),
                e.nominal_bias.into(),
                Cell::from(e.samples),
            ]);
        }
    }
    let results = FidelityResults {
        fidelity,
        gate_quality,
        accept_precision_rising,
    };
    Ok(Output {
        results: to_value(&results)?,
        table,
        passed: true,
    })
}

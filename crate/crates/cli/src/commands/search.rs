use std::time::Duration;

use ensgate_core::search::{
    audit_transitivity, gate_quality, run_monotonic_search, AuditResult, DualProxyEvaluator,
    ExactEvaluator, ExternalProposer, GateQuality, Proposer, RandomProposer, ScriptedProposer,
    SearchRecord, SearchTrace, SimulatedEvaluator,
};
use serde::Serialize;

use super::{to_value, Output};
use crate::config::{EvaluatorConfig, ProposerKind, SearchConfig};
use crate::error::CliError;
use crate::report::{Cell, Table};

#[derive(Debug, Serialize)]
struct Margin {
    iteration: usize,
    id: String,
    margin: Option<f64>,
    accepted: bool,
}

#[derive(Debug, Serialize)]
struct SearchResults {
    proposer: String,
    evaluated: usize,
    accepted: usize,
    skipped: usize,
    /// Accepted share of evaluated candidates.
    acceptance_rate: Option<f64>,
    /// Evaluated candidates where the variance-aware gate disagrees.
    general_gate_disagreements: usize,
    initial_ensemble_error: f64,
    final_ensemble_error: f64,
    margins: Vec<Margin>,
    audit: AuditResult,
    /// Present when the evaluator knows each candidate's true stats.
    gate_quality: Option<GateQuality>,
    trace: SearchTrace,
}

pub fn build_proposer(cfg: &SearchConfig) -> Result<Box<dyn Proposer>, CliError> {
    Ok(match cfg.proposer {
        ProposerKind::Scripted => Box::new(ScriptedProposer::from_stats(&cfg.scripted)),
        ProposerKind::Random => Box::new(RandomProposer::new(cfg.random)),
        ProposerKind::External => {
            let url = cfg
                .proposer_url
                .clone()
                .ok_or_else(|| CliError::Config("external proposer needs a URL".into()))?;
            Box::new(ExternalProposer::new(url, Duration::from_millis(cfg.proposer_timeout_ms)))
        }
    })
}

pub fn build_evaluator(cfg: &EvaluatorConfig) -> Box<dyn DualProxyEvaluator> {
    match *cfg {
        EvaluatorConfig::Exact => Box::new(ExactEvaluator),
        EvaluatorConfig::Simulated { n_samples, label_model } => {
            Box::new(SimulatedEvaluator::new(n_samples, label_model))
        }
    }
}

pub fn search(cfg: &SearchConfig, seed: u64) -> Result<Output, CliError> {
    let settings = cfg.settings(seed)?;
    let ens = settings.ensemble;
    let mut proposer = build_proposer(cfg)?;
    let evaluator = build_evaluator(&cfg.evaluator);
    let trace = run_monotonic_search(cfg.baseline, &settings, proposer.as_mut(), evaluator.as_ref())?;

    let unavailable = trace.skipped_with("proposer_unavailable");
    if cfg.proposer == ProposerKind::External && unavailable == trace.budget {
        return Err(CliError::Runtime(format!(
            "external proposer at {} was unreachable for all {} calls",
            cfg.proposer_url.as_deref().unwrap_or("?"),
            trace.budget
        )));
    }

    let audit = audit_transitivity(&trace, ens);
    let evaluated = trace.evaluated().count();
    let accepted = trace.accepted().count();
    let margins = trace
        .evaluated()
        .map(|r| Margin {
            iteration: r.iteration,
            id: r.descriptor.id.clone(),
            margin: r.margin,
            accepted: r.accepted,
        })
        .collect();
    let general_gate_disagreements = trace
        .evaluated()
        .filter(|r| r.general_gate.is_some_and(|g| g != r.accepted))
        .count();

    let mut table = Table::new(&[
        "iteration",
        "status",
        "id",
        "bin",
        "E",
        "var",
        "rho",
        "delta_e",
        "threshold",
        "margin",
        "accepted",
        "general_gate",
        "reason",
    ]);
    for record in &trace.records {
        match record {
            SearchRecord::Evaluated(r) => table.push(vec![
                Cell::from(r.iteration),
                "evaluated".into(),
                r.descriptor.id.as_str().into(),
                Cell::from(r.descriptor.complexity_bin),
                r.estimated.stats.expected_error.into(),
                r.estimated.stats.variance.into(),
                r.estimated.stats.correlation.into(),
                r.delta_e.into(),
                r.threshold.into(),
                r.margin.into(),
                r.accepted.into(),
                r.general_gate.into(),
                r.reject_reason.as_deref().into(),
            ]),
            SearchRecord::Skipped(s) => table.push(vec![
                Cell::from(s.iteration),
                "skipped".into(),
                s.descriptor.as_ref().map(|d| d.id.as_str()).into(),
                Cell::from(s.bin),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                s.reason.as_str().into(),
            ]),
        }
    }

    let results = SearchResults {
        proposer: proposer.name().to_string(),
        evaluated,
        accepted,
        skipped: trace.records.len() - evaluated,
        acceptance_rate: (evaluated > 0).then(|| accepted as f64 / evaluated as f64),
        general_gate_disagreements,
        initial_ensemble_error: audit.initial_error,
        final_ensemble_error: audit.final_error,
        margins,
        gate_quality: gate_quality(&trace, evaluator.as_ref(), ens),
        audit,
        trace,
    };
    Ok(Output {
        results: to_value(&results)?,
        table,
        passed: true,
    })
}

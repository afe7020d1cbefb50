use serde::{Deserialize, Serialize};

use super::engine::{SearchRecord, SearchTrace};
use crate::stats::{ensemble_error_homogeneous, monotonic_threshold, ArchitectureStats, EnsembleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLink {
    pub iteration: usize,
    pub candidate_id: String,
    pub previous_error: f64,
    pub new_error: f64,
    /// `previous_error − new_error`; positive for an improving link.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditViolation {
    /// `None` for trace-level violations.
    pub iteration: Option<usize>,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub passed: bool,
    pub initial_error: f64,
    pub final_error: f64,
    pub links: Vec<AuditLink>,
    pub violation: Option<AuditViolation>,
}

/// Replays the accepted chain of a trace.
///
/// Checks that every gate verdict is reproducible from the stored stats and
/// the best stats at that point, that the ensemble error of the chain is
/// strictly decreasing, and that `final_best` is the chain's end. Stops at
/// the first violation.
pub fn audit_transitivity(trace: &SearchTrace, ens: EnsembleSpec) -> AuditResult {
    let initial_error = ensemble_error_homogeneous(&trace.initial_best, ens);
    let mut best: ArchitectureStats = trace.initial_best;
    let mut links = Vec::new();
    let mut violation = None;

    for record in &trace.records {
        let SearchRecord::Evaluated(r) = record else {
            continue;
        };
        let gated = !r.estimated.degenerate_rho
            && monotonic_threshold(&best, r.estimated.stats.expected_error - best.expected_error, r.estimated.stats.variance, ens)
                .map(|t| r.estimated.stats.correlation < t)
                .unwrap_or(false);
        if gated != r.accepted {
            violation = Some(AuditViolation {
                iteration: Some(r.iteration),
                kind: "gate_mismatch".into(),
                detail: format!(
                    "`{}` recorded accepted={} but the gate says {}",
                    r.descriptor.id, r.accepted, gated
                ),
            });
            break;
        }
        if !r.accepted {
            continue;
        }
        let previous_error = ensemble_error_homogeneous(&best, ens);
        let new_error = ensemble_error_homogeneous(&r.estimated.stats, ens);
        links.push(AuditLink {
            iteration: r.iteration,
            candidate_id: r.descriptor.id.clone(),
            previous_error,
            new_error,
            margin: previous_error - new_error,
        });
        if new_error >= previous_error {
            violation = Some(AuditViolation {
                iteration: Some(r.iteration),
                kind: "non_decreasing".into(),
                detail: format!(
                    "`{}` moves ensemble error from {previous_error} to {new_error}",
                    r.descriptor.id
                ),
            });
            break;
        }
        best = r.estimated.stats;
    }

    if violation.is_none() && best != trace.final_best {
        violation = Some(AuditViolation {
            iteration: None,
            kind: "final_best_mismatch".into(),
            detail: "final_best is not the last accepted candidate".into(),
        });
    }
    let final_error = ensemble_error_homogeneous(&trace.final_best, ens);
    if violation.is_none() && !links.is_empty() && final_error >= initial_error {
        violation = Some(AuditViolation {
            iteration: None,
            kind: "no_overall_improvement".into(),
            detail: format!("final {final_error} is not below initial {initial_error}"),
        });
    }

    AuditResult {
        passed: violation.is_none(),
        initial_error,
        final_error,
        links,
        violation,
    }
}

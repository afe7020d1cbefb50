use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CandidateDescriptor, Payload};
use crate::estimator::DualProxySample;
use crate::simulator::{build_equicorrelated_ensemble, LabelModel, SimConfig};
use crate::stats::ArchitectureStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] crate::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProxyOutcome {
    /// Predictions of two independently seeded proxies.
    Sample(DualProxySample),
    /// Stats known exactly; estimation is skipped.
    Exact(ArchitectureStats),
}

pub trait DualProxyEvaluator {
    fn evaluate(
        &self,
        descriptor: &CandidateDescriptor,
        seed: u64,
    ) -> Result<ProxyOutcome, EvaluationError>;

    /// True stats of a candidate, when the evaluator knows them.
    fn ground_truth(&self, _descriptor: &CandidateDescriptor) -> Option<ArchitectureStats> {
        None
    }
}

/// Reads `E`, `var` and `rho` from a payload.
pub fn payload_stats(payload: &Payload) -> Result<ArchitectureStats, EvaluationError> {
    let field = |key: &str| {
        payload
            .get(key)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| EvaluationError::MalformedPayload(format!("missing numeric `{key}`")))
    };
    ArchitectureStats::new(field("E")?, field("var")?, field("rho")?)
        .map_err(|e| EvaluationError::MalformedPayload(e.to_string()))
}

/// Returns the payload's stats untouched. For tests and for exercising the
/// gate logic without estimation noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactEvaluator;

impl DualProxyEvaluator for ExactEvaluator {
    fn evaluate(&self, d: &CandidateDescriptor, _seed: u64) -> Result<ProxyOutcome, EvaluationError> {
        Ok(ProxyOutcome::Exact(payload_stats(&d.payload)?))
    }

    fn ground_truth(&self, d: &CandidateDescriptor) -> Option<ArchitectureStats> {
        payload_stats(&d.payload).ok()
    }
}

/// Draws two proxy prediction vectors from the simulator using the payload's
/// stats as ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedEvaluator {
    pub n_samples: usize,
    #[serde(default)]
    pub label_model: LabelModel,
}

impl SimulatedEvaluator {
    pub fn new(n_samples: usize, label_model: LabelModel) -> Self {
        Self {
            n_samples,
            label_model,
        }
    }
}

impl DualProxyEvaluator for SimulatedEvaluator {
    fn evaluate(&self, d: &CandidateDescriptor, seed: u64) -> Result<ProxyOutcome, EvaluationError> {
        let stats = payload_stats(&d.payload)?;
        let cfg = SimConfig::new(stats, 2, self.n_samples, seed).with_label_model(self.label_model);
        let sim = build_equicorrelated_ensemble(&cfg)?;
        let preds = sim.matrix.predictions();
        let sample = DualProxySample::new(
            preds.row(0).to_vec(),
            preds.row(1).to_vec(),
            sim.matrix.labels().to_vec(),
        )?;
        Ok(ProxyOutcome::Sample(sample))
    }

    fn ground_truth(&self, d: &CandidateDescriptor) -> Option<ArchitectureStats> {
        payload_stats(&d.payload).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::proposer::stats_payload;

    fn descriptor(payload: Payload) -> CandidateDescriptor {
        CandidateDescriptor {
            id: "x".into(),
            complexity_bin: 0,
            payload,
            proposer_name: "t".into(),
        }
    }

    #[test]
    fn malformed_payloads() {
        let mut p = Payload::new();
        p.insert("E".into(), serde_json::json!("high"));
        assert!(matches!(
            ExactEvaluator.evaluate(&descriptor(p), 0),
            Err(EvaluationError::MalformedPayload(_))
        ));
        let bad = stats_payload(&ArchitectureStats { expected_error: 0.2, variance: 0.05, correlation: 2.0 });
        assert!(ExactEvaluator.evaluate(&descriptor(bad), 0).is_err());
    }

    #[test]
    fn simulated_evaluator_is_seeded() {
        let d = descriptor(stats_payload(&ArchitectureStats::new(0.25, 0.05, 0.4).unwrap()));
        let ev = SimulatedEvaluator::new(64, LabelModel::default());
        assert_eq!(ev.evaluate(&d, 3).unwrap(), ev.evaluate(&d, 3).unwrap());
        assert_ne!(ev.evaluate(&d, 3).unwrap(), ev.evaluate(&d, 4).unwrap());
        let infeasible = descriptor(stats_payload(&ArchitectureStats::new(0.01, 0.05, 0.4).unwrap()));
        assert!(matches!(ev.evaluate(&infeasible, 0), Err(EvaluationError::Simulation(_))));
    }
}

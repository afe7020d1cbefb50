use serde::{Deserialize, Serialize};

use super::engine::SearchTrace;
use super::evaluator::DualProxyEvaluator;
use crate::stats::{ensemble_error_homogeneous, EnsembleSpec};

/// Gate decisions scored against the true ensemble-error ordering.
///
/// Truth is taken along the engine's own chain: a candidate "improves" when
/// its true ensemble error is below that of the true stats of the current
/// best, which is whatever the engine had accepted at that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateQuality {
    pub evaluated: usize,
    pub improving: usize,
    pub degrading: usize,
    pub true_accepts: usize,
    pub false_accepts: usize,
    pub true_rejects: usize,
    pub false_rejects: usize,
    /// Share of accepts that truly improve.
    pub accept_precision: Option<f64>,
    /// Share of rejects that truly degrade.
    pub reject_precision: Option<f64>,
    pub improving_accept_rate: Option<f64>,
    pub degrading_reject_rate: Option<f64>,
    /// Accepts where the simplified and variance-aware gates disagree.
    pub gate_disagreements: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl GateQuality {
    fn empty() -> Self {
        Self {
            evaluated: 0,
            improving: 0,
            degrading: 0,
            true_accepts: 0,
            false_accepts: 0,
            true_rejects: 0,
            false_rejects: 0,
            accept_precision: None,
            reject_precision: None,
            improving_accept_rate: None,
            degrading_reject_rate: None,
            gate_disagreements: 0,
        }
    }

    fn finish(mut self) -> Self {
        self.accept_precision = ratio(self.true_accepts, self.true_accepts + self.false_accepts);
        self.reject_precision = ratio(self.true_rejects, self.true_rejects + self.false_rejects);
        self.improving_accept_rate = ratio(self.true_accepts, self.improving);
        self.degrading_reject_rate = ratio(self.true_rejects, self.degrading);
        self
    }

    /// Pools the counts of several runs and recomputes the rates.
    pub fn combine(parts: &[GateQuality]) -> GateQuality {
        let mut q = GateQuality::empty();
        for p in parts {
            q.evaluated += p.evaluated;
            q.improving += p.improving;
            q.degrading += p.degrading;
            q.true_accepts += p.true_accepts;
            q.false_accepts += p.false_accepts;
            q.true_rejects += p.true_rejects;
            q.false_rejects += p.false_rejects;
            q.gate_disagreements += p.gate_disagreements;
        }
        q.finish()
    }
}

/// `None` when the evaluator cannot report ground truth for some candidate.
pub fn gate_quality(
    trace: &SearchTrace,
    evaluator: &dyn DualProxyEvaluator,
    ens: EnsembleSpec,
) -> Option<GateQuality> {
    let mut best_error = ensemble_error_homogeneous(&trace.initial_best, ens);
    let mut q = GateQuality::empty();
    for r in trace.evaluated() {
        let truth = evaluator.ground_truth(&r.descriptor)?;
        let err = ensemble_error_homogeneous(&truth, ens);
        let improves = err < best_error;
        q.evaluated += 1;
        if improves {
            q.improving += 1;
        } else {
            q.degrading += 1;
        }
        match (r.accepted, improves) {
            (true, true) => q.true_accepts += 1,
            (true, false) => q.false_accepts += 1,
            (false, false) => q.true_rejects += 1,
            (false, true) => q.false_rejects += 1,
        }
        if r.general_gate.is_some_and(|g| g != r.accepted) {
            q.gate_disagreements += 1;
        }
        if r.accepted {
            best_error = err;
        }
    }
    Some(q.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{
        run_monotonic_search, ExactEvaluator, ProxyOutcome, RandomProposer, SearchSettings,
        CandidateDescriptor, EvaluationError,
    };
    use crate::stats::ArchitectureStats;

    #[test]
    fn exact_evaluator_is_perfect() {
        let ens = EnsembleSpec::new(10).unwrap();
        let mut p = RandomProposer::default();
        let settings = SearchSettings::new(200, 3, ens, 5);
        let base = ArchitectureStats::new(0.25, 0.05, 0.5).unwrap();
        let trace = run_monotonic_search(base, &settings, &mut p, &ExactEvaluator).unwrap();
        let q = gate_quality(&trace, &ExactEvaluator, ens).unwrap();
        assert_eq!(q.evaluated, 200);
        assert_eq!((q.false_accepts, q.false_rejects), (0, 0));
        assert_eq!(q.accept_precision, Some(1.0));
        assert_eq!(q.gate_disagreements, 0);
        let pooled = GateQuality::combine(&[q.clone(), q.clone()]);
        assert_eq!(pooled.evaluated, 400);
        assert_eq!(pooled.accept_precision, Some(1.0));
    }

    struct Blind;
    impl DualProxyEvaluator for Blind {
        fn evaluate(&self, d: &CandidateDescriptor, s: u64) -> Result<ProxyOutcome, EvaluationError> {
            ExactEvaluator.evaluate(d, s)
        }
    }

    #[test]
    fn no_ground_truth_gives_none() {
        let ens = EnsembleSpec::new(10).unwrap();
        let mut p = RandomProposer::default();
        let base = ArchitectureStats::new(0.25, 0.05, 0.5).unwrap();
        let trace = run_monotonic_search(base, &SearchSettings::new(3, 1, ens, 0), &mut p, &Blind).unwrap();
        assert!(gate_quality(&trace, &Blind, ens).is_none());
    }
}

//! Iterative monotonic-acceptance search and the continuous surrogate
//! optimizer.
//!
//! The discrete loop asks a [`Proposer`] for one candidate per iteration,
//! scores it with a [`DualProxyEvaluator`], and accepts it when the
//! simplified monotonic gate passes against the current best. Accepted
//! candidates become the new baseline, so the accepted chain has strictly
//! decreasing closed-form ensemble error whenever the gate is exact.

mod audit;
mod engine;
mod evaluator;
mod external;
mod proposer;
mod quality;
pub mod surrogate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use audit::{audit_transitivity, AuditLink, AuditResult, AuditViolation};
pub use engine::{
    run_monotonic_search, BinSampling, CandidateRecord, SearchRecord, SearchSettings,
    SearchTrace, SkippedRecord,
};
pub use evaluator::{
    payload_stats, DualProxyEvaluator, EvaluationError, ExactEvaluator, ProxyOutcome,
    SimulatedEvaluator,
};
pub use external::{
    ExternalProposer, HistoryDigest, ProposalRequestWire, ProposalResponseWire, WIRE_VERSION,
};
pub use proposer::{
    ProposalContext, Proposer, ProposerError, RandomProposer, RandomProposerConfig,
    ScriptedProposer,
};
pub use quality::{gate_quality, GateQuality};

/// Free-form architecture description. The built-in evaluators read the keys
/// `E`, `var` and `rho`.
pub type Payload = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDescriptor {
    pub id: String,
    pub complexity_bin: usize,
    #[serde(default)]
    pub payload: Payload,
    #[serde(default)]
    pub proposer_name: String,
}

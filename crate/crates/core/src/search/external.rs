use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::proposer::{ProposalContext, Proposer, ProposerError};
use super::{CandidateDescriptor, Payload};
use crate::stats::ArchitectureStats;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryDigest {
    pub accepted_ids: Vec<String>,
    pub iterations_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRequestWire {
    pub v: u32,
    pub run_id: String,
    pub iteration: usize,
    pub bin: usize,
    pub bin_count: usize,
    pub best_descriptor: Option<CandidateDescriptor>,
    pub best_stats: ArchitectureStats,
    pub history_digest: HistoryDigest,
}

impl ProposalRequestWire {
    pub fn from_context(ctx: &ProposalContext<'_>) -> Self {
        Self {
            v: WIRE_VERSION,
            run_id: ctx.run_id.to_owned(),
            iteration: ctx.iteration,
            bin: ctx.bin,
            bin_count: ctx.bin_count,
            best_descriptor: ctx.best_descriptor.cloned(),
            best_stats: ctx.best_stats,
            history_digest: HistoryDigest {
                accepted_ids: ctx.accepted_ids.to_vec(),
                iterations_completed: ctx.iteration,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalResponseWire {
    pub v: u32,
    pub id: String,
    pub complexity_bin: usize,
    #[serde(default)]
    pub payload: Payload,
}

/// Asks an HTTP service for candidates: one JSON POST per iteration.
pub struct ExternalProposer {
    url: String,
    agent: ureq::Agent,
}

impl ExternalProposer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Proposer for ExternalProposer {
    fn name(&self) -> &str {
        "external"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<CandidateDescriptor, ProposerError> {
        let request = ProposalRequestWire::from_context(ctx);
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&request)
            .map_err(|e| ProposerError::Unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProposerError::Unavailable(format!("HTTP {status}")));
        }
        let body: ProposalResponseWire = response
            .body_mut()
            .read_json()
            .map_err(|e| ProposerError::Protocol(e.to_string()))?;
        if body.v != WIRE_VERSION {
            return Err(ProposerError::Protocol(format!(
                "unsupported version {}",
                body.v
            )));
        }
        Ok(CandidateDescriptor {
            id: body.id,
            complexity_bin: body.complexity_bin,
            payload: body.payload,
            proposer_name: self.name().into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shape() {
        let ids = vec!["a".to_string()];
        let ctx = ProposalContext {
            run_id: "r",
            iteration: 4,
            bin: 1,
            bin_count: 3,
            best_descriptor: None,
            best_stats: ArchitectureStats::new(0.25, 0.05, 0.5).unwrap(),
            accepted_ids: &ids,
            seed: 0,
        };
        let v = serde_json::to_value(ProposalRequestWire::from_context(&ctx)).unwrap();
        assert_eq!(v["v"], 1);
        assert_eq!(v["best_stats"]["rho"], 0.5);
        assert_eq!(v["history_digest"]["accepted_ids"][0], "a");
        assert!(v["best_descriptor"].is_null());
    }

    #[test]
    fn unreachable_server_is_unavailable() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut p = ExternalProposer::new(format!("http://{addr}/propose"), Duration::from_millis(500));
        let ctx = ProposalContext {
            run_id: "r",
            iteration: 0,
            bin: 0,
            bin_count: 1,
            best_descriptor: None,
            best_stats: ArchitectureStats::new(0.25, 0.05, 0.5).unwrap(),
            accepted_ids: &[],
            seed: 0,
        };
        let err = p.propose(&ctx).unwrap_err();
        assert_eq!(err.reason(), "proposer_unavailable");
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::evaluator::payload_stats;
use super::{CandidateDescriptor, Payload};
use crate::stats::ArchitectureStats;

/// What a proposer sees when asked for a candidate.
#[derive(Debug, Clone)]
pub struct ProposalContext<'a> {
    pub run_id: &'a str,
    pub iteration: usize,
    pub bin: usize,
    pub bin_count: usize,
    /// `None` while the initial architecture is still the best.
    pub best_descriptor: Option<&'a CandidateDescriptor>,
    pub best_stats: ArchitectureStats,
    pub accepted_ids: &'a [String],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposerError {
    #[error("proposer has no more candidates")]
    Exhausted,
    #[error("no candidate available for bin {0}")]
    BinUnavailable(usize),
    #[error("proposer unavailable: {0}")]
    Unavailable(String),
    #[error("malformed proposer response: {0}")]
    Protocol(String),
}

impl ProposerError {
    /// Stable reason code written into skipped search records.
    pub fn reason(&self) -> &'static str {
        match self {
            ProposerError::Exhausted => "proposer_exhausted",
            ProposerError::BinUnavailable(_) => "bin_unavailable",
            ProposerError::Unavailable(_) => "proposer_unavailable",
            ProposerError::Protocol(_) => "protocol_error",
        }
    }
}

pub trait Proposer {
    fn name(&self) -> &str;

    /// Returns a candidate in `ctx.bin`, ideally diverse from the current best.
    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<CandidateDescriptor, ProposerError>;
}

/// Replays a fixed list in order, moved into whatever bin is requested.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProposer {
    queue: std::collections::VecDeque<CandidateDescriptor>,
}

impl ScriptedProposer {
    pub fn new(candidates: Vec<CandidateDescriptor>) -> Self {
        Self {
            queue: candidates.into(),
        }
    }

    /// Scripted candidates carrying exact stats in their payloads, with ids
    /// `scripted-0`, `scripted-1`, ...
    pub fn from_stats(stats: &[ArchitectureStats]) -> Self {
        Self::new(
            stats
                .iter()
                .enumerate()
                .map(|(i, s)| CandidateDescriptor {
                    id: format!("scripted-{i}"),
                    complexity_bin: 0,
                    payload: stats_payload(s),
                    proposer_name: "scripted".into(),
                })
                .collect(),
        )
    }
}

impl Proposer for ScriptedProposer {
    fn name(&self) -> &str {
        "scripted"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<CandidateDescriptor, ProposerError> {
        let mut next = self.queue.pop_front().ok_or(ProposerError::Exhausted)?;
        next.complexity_bin = ctx.bin;
        if next.proposer_name.is_empty() {
            next.proposer_name = self.name().into();
        }
        Ok(next)
    }
}

pub fn stats_payload(stats: &ArchitectureStats) -> Payload {
    let mut p = Payload::new();
    p.insert("E".into(), json!(stats.expected_error));
    p.insert("var".into(), json!(stats.variance));
    p.insert("rho".into(), json!(stats.correlation));
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomProposerConfig {
    /// Range of `E(candidate) − E(best)`.
    pub error_step: [f64; 2],
    /// Absolute range of candidate correlations.
    pub correlation: [f64; 2],
    /// Range of candidate variances; `None` keeps the current best's variance.
    pub variance: Option<[f64; 2]>,
    /// Lower clamp on candidate error, e.g. the simulator's noise floor.
    pub min_error: f64,
}

impl Default for RandomProposerConfig {
    fn default() -> Self {
        Self {
            error_step: [-0.01, 0.01],
            correlation: [0.1, 0.9],
            variance: None,
            min_error: 0.0,
        }
    }
}

/// Draws synthetic architectures around the current best. Each call is a
/// pure function of the request seed.
#[derive(Debug, Clone, Default)]
pub struct RandomProposer {
    config: RandomProposerConfig,
}

impl RandomProposer {
    pub fn new(config: RandomProposerConfig) -> Self {
        Self { config }
    }
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl Proposer for RandomProposer {
    fn name(&self) -> &str {
        "random"
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<CandidateDescriptor, ProposerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let cfg = &self.config;
        // Mutate the best architecture itself, not its noisy estimate.
        let parent = ctx
            .best_descriptor
            .and_then(|d| payload_stats(&d.payload).ok())
            .unwrap_or(ctx.best_stats);
        let expected_error = (parent.expected_error + draw(&mut rng, cfg.error_step)).max(cfg.min_error);
        let correlation = draw(&mut rng, cfg.correlation).clamp(-1.0, 1.0);
        let variance = match cfg.variance {
            Some(range) => draw(&mut rng, range),
            None => parent.variance,
        };
        let complexity = (ctx.bin as f64 + rng.random::<f64>()) / ctx.bin_count as f64;
        let mut payload = stats_payload(&ArchitectureStats {
            expected_error,
            variance,
            correlation,
        });
        payload.insert("complexity".into(), json!(complexity));
        Ok(CandidateDescriptor {
            id: format!("random-{:05}", ctx.iteration),
            complexity_bin: ctx.bin,
            payload,
            proposer_name: self.name().into(),
        })
    }
}

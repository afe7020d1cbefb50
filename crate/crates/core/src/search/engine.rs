use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluator::{DualProxyEvaluator, ProxyOutcome};
use super::proposer::{ProposalContext, Proposer};
use super::CandidateDescriptor;
use crate::error::{invalid, Result};
use crate::estimator::{estimate_delta_e, estimate_stats, EstimatedStats};
use crate::seed::{derive_seed, rng_for};
use crate::stats::{gate_general, monotonic_threshold, ArchitectureStats, EnsembleSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinSampling {
    /// Independent uniform draw every iteration.
    #[default]
    WithReplacement,
    /// Shuffled passes over all bins.
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub budget: usize,
    pub bins: usize,
    pub ensemble: EnsembleSpec,
    pub seed: u64,
    #[serde(default)]
    pub bin_sampling: BinSampling,
}

impl SearchSettings {
    pub fn new(budget: usize, bins: usize, ensemble: EnsembleSpec, seed: u64) -> Self {
        Self {
            budget,
            bins,
            ensemble,
            seed,
            bin_sampling: BinSampling::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(invalid("budget", "must be at least 1"));
        }
        if self.bins == 0 {
            return Err(invalid("bins", "must be at least 1"));
        }
        self.ensemble.gate_factor()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub iteration: usize,
    pub descriptor: CandidateDescriptor,
    pub estimated: EstimatedStats,
    /// `E(candidate) − E(best)`.
    pub delta_e: f64,
    /// `None` when the candidate was rejected before the gate ran.
    pub threshold: Option<f64>,
    pub accepted: bool,
    /// Verdict of the variance-aware gate on the same stats.
    pub general_gate: Option<bool>,
    /// `threshold − ρ̂`; positive on acceptance.
    pub margin: Option<f64>,
    pub reject_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub iteration: usize,
    pub bin: usize,
    pub reason: String,
    pub detail: String,
    pub descriptor: Option<CandidateDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchRecord {
    Evaluated(CandidateRecord),
    Skipped(SkippedRecord),
}

impl SearchRecord {
    pub fn as_evaluated(&self) -> Option<&CandidateRecord> {
        match self {
            SearchRecord::Evaluated(r) => Some(r),
            SearchRecord::Skipped(_) => None,
        }
    }

    pub fn skip_reason(&self) -> Option<&str> {
        match self {
            SearchRecord::Skipped(s) => Some(&s.reason),
            SearchRecord::Evaluated(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub run_id: String,
    pub initial_best: ArchitectureStats,
    pub records: Vec<SearchRecord>,
    pub final_best: ArchitectureStats,
    /// Architecture to deploy as `M` instances; `None` keeps the initial one.
    pub winner: Option<CandidateDescriptor>,
    pub budget: usize,
    pub bins: usize,
    pub ensemble_size: usize,
    pub rng_seed: u64,
    pub proposer_calls: usize,
    pub evaluator_calls: usize,
    pub proxy_trainings: usize,
}

impl SearchTrace {
    pub fn evaluated(&self) -> impl Iterator<Item = &CandidateRecord> {
        self.records.iter().filter_map(SearchRecord::as_evaluated)
    }

    pub fn accepted(&self) -> impl Iterator<Item = &CandidateRecord> {
        self.evaluated().filter(|r| r.accepted)
    }

    pub fn skipped_with(&self, reason: &str) -> usize {
        self.records
            .iter()
            .filter(|r| r.skip_reason() == Some(reason))
            .count()
    }
}

struct BinSampler {
    rng: ChaCha8Rng,
    mode: BinSampling,
    bins: usize,
    pass: Vec<usize>,
}

impl BinSampler {
    fn next(&mut self) -> usize {
        match self.mode {
            BinSampling::WithReplacement => self.rng.random_range(0..self.bins),
            BinSampling::WithoutReplacement => {
                if self.pass.is_empty() {
                    self.pass = (0..self.bins).collect();
                    self.pass.shuffle(&mut self.rng);
                }
                self.pass.pop().expect("refilled above")
            }
        }
    }
}

fn judge(
    iteration: usize,
    descriptor: CandidateDescriptor,
    estimated: EstimatedStats,
    best: &ArchitectureStats,
    ens: EnsembleSpec,
) -> CandidateRecord {
    let delta_e = estimate_delta_e(&estimated, best);
    let mut record = CandidateRecord {
        iteration,
        descriptor,
        estimated,
        delta_e,
        threshold: None,
        accepted: false,
        general_gate: None,
        margin: None,
        reject_reason: None,
    };
    if estimated.degenerate_rho {
        record.reject_reason = Some("degenerate_rho".into());
        return record;
    }
    let threshold = match monotonic_threshold(best, delta_e, estimated.stats.variance, ens) {
        Ok(t) => t,
        Err(_) => {
            record.reject_reason = Some("zero_variance".into());
            return record;
        }
    };
    record.threshold = Some(threshold);
    record.margin = Some(threshold - estimated.stats.correlation);
    record.accepted = estimated.stats.correlation < threshold;
    record.general_gate = gate_general(&estimated.stats, best, ens).ok();
    if !record.accepted {
        record.reject_reason = Some("gate".into());
    }
    record
}

/// Iterative monotonic acceptance.
///
/// Every iteration consumes one unit of budget whether or not the proposer or
/// evaluator succeeds. Proposer and evaluator seeds are derived from
/// `settings.seed` and the iteration index, so a run is reproducible.
pub fn run_monotonic_search(
    baseline: ArchitectureStats,
    settings: &SearchSettings,
    proposer: &mut dyn Proposer,
    evaluator: &dyn DualProxyEvaluator,
) -> Result<SearchTrace> {
    settings.validate()?;
    baseline.validate()?;
    if baseline.variance <= 0.0 {
        return Err(invalid("baseline.var", "must be positive"));
    }
    let ens = settings.ensemble;
    let run_id = format!("run-{:016x}", settings.seed);
    let mut bins = BinSampler {
        rng: rng_for(settings.seed, "bins", 0),
        mode: settings.bin_sampling,
        bins: settings.bins,
        pass: Vec::new(),
    };

    let mut best = baseline;
    let mut best_descriptor: Option<CandidateDescriptor> = None;
    let mut accepted_ids: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut records = Vec::with_capacity(settings.budget);
    let mut evaluator_calls = 0;

    for iteration in 0..settings.budget {
        let bin = bins.next();
        let ctx = ProposalContext {
            run_id: &run_id,
            iteration,
            bin,
            bin_count: settings.bins,
            best_descriptor: best_descriptor.as_ref(),
            best_stats: best,
            accepted_ids: &accepted_ids,
            seed: derive_seed(settings.seed, "propose", iteration as u64),
        };
        let skip = |reason: &str, detail: String, descriptor: Option<CandidateDescriptor>| {
            SearchRecord::Skipped(SkippedRecord {
                iteration,
                bin,
                reason: reason.into(),
                detail,
                descriptor,
            })
        };

        let descriptor = match proposer.propose(&ctx) {
            Ok(d) => d,
            Err(e) => {
                records.push(skip(e.reason(), e.to_string(), None));
                continue;
            }
        };
        if descriptor.complexity_bin != bin {
            let detail = format!("requested bin {bin}, got {}", descriptor.complexity_bin);
            records.push(skip("bin_mismatch", detail, Some(descriptor)));
            continue;
        }
        if !seen.insert(descriptor.id.clone()) {
            let detail = format!("id `{}` already used in this run", descriptor.id);
            records.push(skip("duplicate_id", detail, Some(descriptor)));
            continue;
        }

        evaluator_calls += 1;
        let eval_seed = derive_seed(settings.seed, "evaluate", iteration as u64);
        let estimated = match evaluator.evaluate(&descriptor, eval_seed) {
            Ok(ProxyOutcome::Exact(stats)) => EstimatedStats::exact(stats),
            Ok(ProxyOutcome::Sample(sample)) => estimate_stats(&sample)?,
            Err(e) => {
                records.push(skip("evaluation_error", e.to_string(), Some(descriptor)));
                continue;
            }
        };

        let record = judge(iteration, descriptor, estimated, &best, ens);
        if record.accepted {
            best = record.estimated.stats;
            best_descriptor = Some(record.descriptor.clone());
            accepted_ids.push(record.descriptor.id.clone());
        }
        records.push(SearchRecord::Evaluated(record));
    }

    Ok(SearchTrace {
        run_id,
        initial_best: baseline,
        records,
        final_best: best,
        winner: best_descriptor,
        budget: settings.budget,
        bins: settings.bins,
        ensemble_size: ens.size(),
        rng_seed: settings.seed,
        proposer_calls: settings.budget,
        evaluator_calls,
        proxy_trainings: 2 * evaluator_calls,
    })
}

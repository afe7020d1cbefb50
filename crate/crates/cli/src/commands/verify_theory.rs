use ensgate_core::seed::rng_for;
use ensgate_core::simulator::{
    gate_soundness_experiment, validate_formula_suite, GatePairOutcome, ValidationReport,
};
use ensgate_core::stats::{ensemble_error_delta, gate_general, gate_simplified};
use ensgate_core::{ArchitectureStats, EnsembleSpec};
use rand::Rng;
use serde::Serialize;

use super::{to_value, Output};
use crate::config::VerifyTheoryConfig;
use crate::error::CliError;
use crate::report::{Cell, Table};

/// Identity tolerance for the per-dataset error-ambiguity split.
const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Serialize)]
struct Invariant {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct ExactGateCheck {
    triples: usize,
    general_violations: usize,
    simplified_disagreements: usize,
}

#[derive(Debug, Serialize)]
struct VerifyResults {
    validation: ValidationReport,
    exact_gate: ExactGateCheck,
    gate_soundness: Vec<GatePairOutcome>,
    invariants: Vec<Invariant>,
    passed: bool,
}

/// Closed-form gate checks on random stats: the variance-aware gate must
/// match the sign of the error change, and the simplified gate must match it
/// whenever the variances agree.
fn exact_gate_check(triples: usize, seed: u64) -> ExactGateCheck {
    let mut rng = rng_for(seed, "exact-gate", 0);
    let mut general_violations = 0;
    let mut simplified_disagreements = 0;
    for _ in 0..triples {
        let m: usize = rng.random_range(2..=100);
        let ens = EnsembleSpec::new(m).expect("m >= 2");
        let lo = ens.min_correlation();
        let mut draw = |var: Option<f64>| ArchitectureStats {
            expected_error: rng.random_range(0.0..1.0),
            variance: var.unwrap_or_else(|| rng.random_range(1e-4..0.5)),
            correlation: rng.random_range(lo..=1.0),
        };
        let baseline = draw(None);
        let candidate = draw(None);
        let general = gate_general(&candidate, &baseline, ens).expect("m >= 2");
        if general != (ensemble_error_delta(&candidate, &baseline, ens) < 0.0) {
            general_violations += 1;
        }
        let same_var = draw(Some(baseline.variance));
        let simplified = gate_simplified(&same_var, &baseline, ens).expect("positive variance");
        if simplified != gate_general(&same_var, &baseline, ens).expect("m >= 2") {
            simplified_disagreements += 1;
        }
    }
    ExactGateCheck {
        triples,
        general_violations,
        simplified_disagreements,
    }
}

pub fn verify_theory(cfg: &VerifyTheoryConfig, seed: u64) -> Result<Output, CliError> {
    let sim = cfg.sim_config(seed);
    let validation = validate_formula_suite(&sim, cfg.trials)?;
    let exact_gate = exact_gate_check(cfg.exact_gate_triples, seed);
    let gate_soundness = if cfg.gate.pairs.is_empty() {
        Vec::new()
    } else {
        gate_soundness_experiment(
            &cfg.gate.pairs,
            EnsembleSpec::new(cfg.ensemble_size)?,
            cfg.gate.n_samples,
            cfg.gate.replications,
            cfg.label_model,
            seed,
        )?
    };

    let flagged: Vec<&str> = validation
        .checks
        .iter()
        .filter(|c| c.flagged)
        .map(|c| c.name.as_str())
        .collect();
    let weak_pairs: Vec<usize> = gate_soundness
        .iter()
        .enumerate()
        .filter(|(_, o)| o.consistency_rate < cfg.gate.min_consistency)
        .map(|(i, _)| i)
        .collect();
    let invariants = vec![
        Invariant {
            name: "decomposition_identity",
            passed: validation.max_identity_rel_error <= IDENTITY_TOLERANCE,
            detail: format!("max relative error {:e}", validation.max_identity_rel_error),
        },
        Invariant {
            name: "closed_form_moments",
            passed: validation.all_within_bounds,
            detail: if flagged.is_empty() {
                "all |z| within bound".into()
            } else {
                format!("flagged: {}", flagged.join(", "))
            },
        },
        Invariant {
            name: "exact_gate_soundness",
            passed: exact_gate.general_violations == 0,
            detail: format!("{} violations in {} triples", exact_gate.general_violations, exact_gate.triples),
        },
        Invariant {
            name: "simplified_gate_equivalence",
            passed: exact_gate.simplified_disagreements == 0,
            detail: format!(
                "{} disagreements in {} equal-variance triples",
                exact_gate.simplified_disagreements, exact_gate.triples
            ),
        },
        Invariant {
            name: "empirical_gate_soundness",
            passed: weak_pairs.is_empty(),
            detail: if weak_pairs.is_empty() {
                format!("{} pairs at or above {}", gate_soundness.len(), cfg.gate.min_consistency)
            } else {
                format!("pairs below {}: {weak_pairs:?}", cfg.gate.min_consistency)
            },
        },
    ];
    let passed = invariants.iter().all(|i| i.passed);

    let mut table = Table::new(&[
        "trial",
        "seed",
        "ensemble_error",
        "ambiguity",
        "avg_single_error",
        "learner_variance",
        "pairwise_correlation",
        "identity_rel_error",
    ]);
    for t in &validation.per_trial {
        table.push(vec![
            Cell::from(t.trial),
            Cell::from(t.seed),
            t.ensemble_error.into(),
            t.ambiguity.into(),
            t.avg_single_error.into(),
            t.learner_variance.into(),
            t.pairwise_correlation.into(),
            t.identity_rel_error.into(),
        ]);
    }
    let results = VerifyResults {
        validation,
        exact_gate,
        gate_soundness,
        invariants,
        passed,
    };
    Ok(Output {
        results: to_value(&results)?,
        table,
        passed,
    })
}

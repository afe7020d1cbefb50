//! Monte-Carlo checks of the simulator and the dual-proxy estimator against
//! closed forms and brute-force oracles.

use ensgate_core::estimator::estimation_fidelity_report;
use ensgate_core::simulator::{
    build_equicorrelated_ensemble, decomposition_estimates, gate_soundness_experiment,
    simulate_ensemble_error, validate_formula_suite, GatePair, LabelModel, SimConfig,
};
use ensgate_core::stats::{
    average_ambiguity, ensemble_error_delta, ensemble_error_homogeneous, ArchitectureStats,
    EnsembleSpec,
};

fn cfg(m: usize, n: usize, e: f64, var: f64, rho: f64, seed: u64) -> SimConfig {
    SimConfig::new(ArchitectureStats::new(e, var, rho).unwrap(), m, n, seed)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma).powi(2);
        sbb += (b[i] - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Average Pearson correlation over all learner pairs, with a batch-means
/// standard error.
fn all_pairs_rho(rows: &[Vec<f64>], batches: usize) -> (f64, f64) {
    let n = rows[0].len();
    let len = n / batches;
    let per_batch: Vec<f64> = (0..batches)
        .map(|b| {
            let span = b * len..(b + 1) * len;
            let mut total = 0.0;
            let mut count = 0.0;
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    total += pearson(&rows[i][span.clone()], &rows[j][span.clone()]);
                    count += 1.0;
                }
            }
            total / count
        })
        .collect();
    let (m, sd) = mean_sd(&per_batch);
    (m, sd / (batches as f64).sqrt())
}

fn rows_of(c: &SimConfig) -> Vec<Vec<f64>> {
    let sim = build_equicorrelated_ensemble(c).unwrap();
    sim.matrix
        .predictions()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect()
}

#[test]
fn pairwise_correlation_matches_target() {
    let rows = rows_of(&cfg(10, 100_000, 0.25, 0.05, 0.2, 42));
    assert_eq!(rows.len() * (rows.len() - 1) / 2, 45);
    let (rho, se) = all_pairs_rho(&rows, 20);
    assert!((rho - 0.2).abs() < 3.0 * se, "rho {rho} se {se}");
}

#[test]
fn negative_correlation_down_to_the_bound() {
    let rows = rows_of(&cfg(5, 50_000, 0.25, 0.05, -0.2, 3));
    let (rho, se) = all_pairs_rho(&rows, 20);
    assert!((rho + 0.2).abs() < 4.0 * se.max(1e-4), "rho {rho} se {se}");
    assert!(build_equicorrelated_ensemble(&cfg(5, 100, 0.25, 0.05, -0.26, 3)).is_err());
}

#[test]
fn independent_learners_have_null_covariance() {
    let rows = rows_of(&cfg(6, 50_000, 0.25, 0.05, 0.0, 5));
    let n = rows[0].len() as f64;
    let se = 0.05 / n.sqrt();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let mi = rows[i].iter().sum::<f64>() / n;
            let mj = rows[j].iter().sum::<f64>() / n;
            let cov = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / n;
            assert!(cov.abs() < 4.0 * se, "cov({i},{j}) = {cov}");
        }
    }
}

#[test]
fn ensemble_error_and_ambiguity_match_closed_form() {
    let c = cfg(10, 100_000, 0.25, 0.05, 0.2, 42);
    let ens = EnsembleSpec::new(10).unwrap();
    let sim = build_equicorrelated_ensemble(&c).unwrap();
    let d = decomposition_estimates(&sim.matrix);
    let truth = ensemble_error_homogeneous(&c.target_stats(), ens);
    assert!((truth - 0.214).abs() < 1e-12);
    assert!(d.ensemble_error.z_score(truth).abs() < 3.0, "{:?}", d.ensemble_error);
    let amb = average_ambiguity(0.05, 0.2, ens);
    assert!((amb - 0.036).abs() < 1e-12);
    assert!(d.ambiguity.z_score(amb).abs() < 3.0, "{:?}", d.ambiguity);
    let identity = d.ensemble_error.mean - (d.avg_single_error.mean - d.ambiguity.mean);
    assert!(identity.abs() <= 1e-10 * d.ensemble_error.mean);
}

#[test]
fn formula_suite_passes() {
    let report = validate_formula_suite(&cfg(10, 20_000, 0.25, 0.05, 0.2, 42), 30).unwrap();
    assert!(report.all_within_bounds, "{:#?}", report.checks);
    assert!(report.max_identity_rel_error < 1e-10);
    assert!((report.irreducible_noise - 0.16).abs() < 1e-15);
    assert!((report.bias - 0.2).abs() < 1e-12);
}

#[test]
fn zero_variance_learners_are_deterministic() {
    let report = validate_formula_suite(&cfg(4, 1_000, 0.2, 0.0, 0.3, 1), 3).unwrap();
    assert!(report.per_trial.iter().all(|t| t.learner_variance == 0.0 && t.ambiguity == 0.0));
}

#[test]
fn lower_correlation_gives_lower_error() {
    let low = simulate_ensemble_error(&cfg(10, 100_000, 0.25, 0.05, 0.1, 9)).unwrap();
    let high = simulate_ensemble_error(&cfg(10, 100_000, 0.25, 0.05, 0.6, 9)).unwrap();
    assert!(low.mean < high.mean);
}

#[test]
fn standard_error_halves_when_n_quadruples() {
    let small = simulate_ensemble_error(&cfg(10, 25_000, 0.25, 0.05, 0.2, 2)).unwrap();
    let large = simulate_ensemble_error(&cfg(10, 100_000, 0.25, 0.05, 0.2, 2)).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn gate_verdicts_order_realised_errors() {
    let ens = EnsembleSpec::new(10).unwrap();
    let base = ArchitectureStats::new(0.25, 0.05, 0.5).unwrap();
    let pairs = [
        GatePair {
            candidate: ArchitectureStats::new(0.24, 0.05, 0.3).unwrap(),
            baseline: base,
        },
        GatePair {
            candidate: ArchitectureStats::new(0.26, 0.05, 0.6).unwrap(),
            baseline: base,
        },
    ];
    let outcomes = gate_soundness_experiment(&pairs, ens, 1_000_000, 5, LabelModel::default(), 77).unwrap();
    assert!(outcomes[0].gate_general && !outcomes[1].gate_general);
    for o in &outcomes {
        assert!(o.consistency_rate >= 0.99, "{o:?}");
        assert_eq!(o.predicted_delta, ensemble_error_delta(&o.pair.candidate, &o.pair.baseline, ens));
    }
}

#[test]
fn fidelity_converges_on_constant_signal() {
    let c = cfg(10, 2, 0.25, 0.05, 0.2, 11);
    let report = estimation_fidelity_report(&c, &[1_000, 10_000, 100_000], 100).unwrap();
    let big = report.row(100_000).unwrap();
    let rho = big.estimator("correlation").unwrap();
    assert!((rho.mean - 0.2).abs() < 0.02, "{rho:?}");
    for name in ["correlation", "variance", "expected_error", "deviation_correlation"] {
        let r: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|n| report.row(*n).unwrap().estimator(name).unwrap().rmse)
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2], "{name}: {r:?}");
    }
    assert!(big.proxy_error_correlation.is_some());
}

#[test]
fn fidelity_targets_under_per_sample_signal() {
    let c = cfg(10, 2, 0.3, 0.05, 0.3, 12).with_label_model(LabelModel::PerSampleP { low: 0.05, high: 0.45 });
    let report = estimation_fidelity_report(&c, &[50_000], 40).unwrap();
    let row = report.row(50_000).unwrap();
    for name in ["variance", "pairwise_variance", "correlation", "deviation_correlation", "diversity_term"] {
        let s = row.estimator(name).unwrap();
        assert!(s.bias.abs() < 4.0 * s.rmse / (s.samples as f64).sqrt() + 1e-4, "{s:?}");
    }
    let batch = row.estimator("correlation").unwrap();
    assert!(batch.nominal_bias > 0.05, "batch Pearson absorbs signal variation: {batch:?}");
}

#[test]
fn tiny_batches_are_flagged() {
    let report = estimation_fidelity_report(&cfg(10, 2, 0.25, 0.05, 0.2, 13), &[2, 1_000], 10).unwrap();
    assert!(report.row(2).unwrap().small_n);
    assert!(!report.row(1_000).unwrap().small_n);
}

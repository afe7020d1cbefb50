use ensgate_core::bagging::{dropout_gain_scale, BaggingModel};
use ensgate_core::estimator::{estimate_stats, DualProxySample};
use ensgate_core::search::{
    audit_transitivity, run_monotonic_search, ExactEvaluator, RandomProposer, RandomProposerConfig,
    SearchSettings,
};
use ensgate_core::stats::{
    average_ambiguity, ensemble_error_delta, ensemble_error_homogeneous, gate_general,
    gate_simplified, ArchitectureStats, CostModel, EnsembleSpec,
};
use proptest::prelude::*;

fn stats_strategy() -> impl Strategy<Value = ArchitectureStats> {
    (0.0..1.0f64, 1e-4..0.5f64, -0.1..1.0f64).prop_map(|(e, v, r)| ArchitectureStats {
        expected_error: e,
        variance: v,
        correlation: r,
    })
}

fn ens_strategy() -> impl Strategy<Value = EnsembleSpec> {
    (2usize..200).prop_map(|m| EnsembleSpec::new(m).unwrap())
}

/// Admissible bagging models in a range wide enough to move α* well away
/// from 1.
fn model_strategy() -> impl Strategy<Value = (BaggingModel, EnsembleSpec)> {
    (0.05..0.5f64, 0.01..1.0f64, -1.0..-1e-3f64, -0.05..1.0f64, 1e-3..0.2f64, 2usize..100)
        .prop_map(|(e, k1, k2, rho0, var, m)| (BaggingModel::new(e, k1, k2, rho0, var).unwrap(), EnsembleSpec::new(m).unwrap()))
        .prop_filter("admissible", |(b, ens)| b.check_admissible(*ens).is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn general_gate_iff_error_drops(c in stats_strategy(), b in stats_strategy(), ens in ens_strategy()) {
        let accept = gate_general(&c, &b, ens).unwrap();
        prop_assert_eq!(accept, ensemble_error_delta(&c, &b, ens) < 0.0);
    }

    #[test]
    fn simplified_equals_general_at_equal_variance(c in stats_strategy(), b in stats_strategy(), ens in ens_strategy()) {
        let c = ArchitectureStats { variance: b.variance, ..c };
        prop_assert_eq!(gate_simplified(&c, &b, ens).unwrap(), gate_general(&c, &b, ens).unwrap());
    }
}

proptest! {
    #[test]
    fn error_non_decreasing_in_rho(s in stats_strategy(), r2 in -0.1..1.0f64, ens in ens_strategy()) {
        let (lo, hi) = if s.correlation <= r2 { (s.correlation, r2) } else { (r2, s.correlation) };
        let at = |r| ensemble_error_homogeneous(&ArchitectureStats { correlation: r, ..s }, ens);
        prop_assert!(at(lo) <= at(hi));
    }

    #[test]
    fn ensemble_size_limits(s in stats_strategy()) {
        prop_assert_eq!(ensemble_error_homogeneous(&s, EnsembleSpec::new(1).unwrap()), s.expected_error);
        let big = ensemble_error_homogeneous(&s, EnsembleSpec::new(1_000_000_000).unwrap());
        let limit = s.expected_error - s.variance * (1.0 - s.correlation);
        prop_assert!((big - limit).abs() < 1e-9);
    }

    #[test]
    fn decomposition_identity_is_exact(s in stats_strategy(), ens in ens_strategy()) {
        prop_assert_eq!(
            ensemble_error_homogeneous(&s, ens),
            s.expected_error - average_ambiguity(s.variance, s.correlation, ens)
        );
    }

    #[test]
    fn cost_factor_tends_to_ensemble_size(m in 2u64..500, c in 0.1..100.0f64, ratio in 0.0..1.0f64) {
        let cost = CostModel::new(1_000_000 * m, m, c, ratio * c).unwrap();
        let f = cost.reduction_factor();
        prop_assert!((f - m as f64 / (1.0 + ratio)).abs() / f < 1e-3);
        let free = CostModel::new(1_000_000 * m, m, c, 0.0).unwrap();
        prop_assert!((free.reduction_factor() - m as f64).abs() / (m as f64) < 0.01);
    }

    #[test]
    fn bagging_curve_is_u_shaped((model, ens) in model_strategy()) {
        let a = model.optimal_alpha(ens).unwrap();
        let f = |x: f64| model.ensemble_error_alpha(x, ens).unwrap();
        let step = 1e-3;
        let mut x = a - step;
        while x - step > 0.0 {
            prop_assert!(f(x - step) > f(x));
            x -= 17.0 * step;
        }
        let mut x = a + step;
        while x + step <= 1.0 {
            prop_assert!(f(x + step) > f(x));
            x += 17.0 * step;
        }
    }

    #[test]
    fn minimal_error_consistency((model, ens) in model_strategy()) {
        let g = model.minimal_ensemble_error(ens).unwrap();
        let direct = model.ensemble_error_alpha(model.optimal_alpha(ens).unwrap(), ens).unwrap();
        prop_assert!((g.minimal_error - direct).abs() < 1e-12);
        prop_assert_eq!(g.minimal_error, model.e_base - g.base_diversity_gain - g.dropout_gain);
    }

    #[test]
    fn beta_scales_with_shrinkage(m1 in 2usize..500, m2 in 2usize..500) {
        let model = BaggingModel::new(0.2, 10.0, -0.2, 0.6, 0.05).unwrap();
        let (e1, e2) = (EnsembleSpec::new(m1).unwrap(), EnsembleSpec::new(m2).unwrap());
        let ratio = model.optimal_beta(e1).unwrap() / model.optimal_beta(e2).unwrap();
        let expected = ((m1 as f64 - 1.0) / m1 as f64) / ((m2 as f64 - 1.0) / m2 as f64);
        prop_assert!((ratio - expected).abs() <= 1e-12 * expected);
        prop_assert!(dropout_gain_scale(e1) < 1.0);
    }

    #[test]
    fn optimum_passes_the_gate((model, ens) in model_strategy(), a_old in 0.05..1.0f64) {
        let a = model.optimal_alpha(ens).unwrap();
        prop_assume!((a_old - a).abs() > 1e-6);
        prop_assert!(model.verify_monotonic_at_optimum(ens, a_old).unwrap());
    }

    #[test]
    fn estimator_symmetric_and_shift_invariant(
        rows in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0u8..2), 3..60),
        shift in -0.5..0.5f64,
    ) {
        let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
        let ds = DualProxySample::new(a.clone(), b.clone(), y.clone()).unwrap();
        let est = estimate_stats(&ds).unwrap();
        let sw = estimate_stats(&ds.swapped()).unwrap();
        prop_assert_eq!(est.stats, sw.stats);
        prop_assert_eq!(est.degenerate_rho, sw.degenerate_rho);

        let shifted = DualProxySample::new(
            a.iter().map(|x| x + shift).collect(),
            b.iter().map(|x| x + shift).collect(),
            y.clone(),
        ).unwrap();
        let sh = estimate_stats(&shifted).unwrap();
        prop_assert!((sh.stats.correlation - est.stats.correlation).abs() < 1e-9);
        prop_assert!((sh.stats.variance - est.stats.variance).abs() < 1e-12);
        let n = y.len() as f64;
        let mean_resid: f64 = a.iter().chain(&b).zip(y.iter().chain(&y)).map(|(p, t)| t - p).sum::<f64>() / (2.0 * n);
        let expected = est.stats.expected_error - 2.0 * shift * mean_resid + shift * shift;
        prop_assert!((sh.stats.expected_error - expected).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_traces_are_monotone_and_deterministic(seed in any::<u64>(), budget in 1usize..80, bins in 1usize..6, m in 2usize..30) {
        let ens = EnsembleSpec::new(m).unwrap();
        let base = ArchitectureStats::new(0.25, 0.05, 0.5).unwrap();
        let settings = SearchSettings::new(budget, bins, ens, seed);
        let run = || {
            let mut p = RandomProposer::new(RandomProposerConfig::default());
            run_monotonic_search(base, &settings, &mut p, &ExactEvaluator).unwrap()
        };
        let trace = run();
        prop_assert_eq!(&trace, &run());
        prop_assert_eq!(trace.proposer_calls, budget);
        prop_assert!(trace.evaluator_calls <= budget);
        prop_assert_eq!(trace.proxy_trainings, 2 * trace.evaluator_calls);

        let audit = audit_transitivity(&trace, ens);
        prop_assert!(audit.passed, "{:?}", audit.violation);
        let accepted = trace.accepted().count();
        if accepted > 0 {
            prop_assert!(audit.final_error < audit.initial_error);
        } else {
            prop_assert_eq!(audit.final_error, audit.initial_error);
        }
    }
}

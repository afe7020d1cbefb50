//! Feature-bagging case study with a closed-form optimum.
//!
//! Each learner keeps a fraction `α ∈ (0, 1]` of the features. Near `α = 1`
//! the single-learner error grows quadratically, correlation falls linearly
//! and variance stays put:
//!
//! ```text
//! E(α) = E_base + k₁(1−α)²      k₁ > 0
//! ρ(α) = ρ₀ + k₂(1−α)           k₂ < 0
//! σ²(α) = σ²_base
//! ```
//!
//! Plugging these into the homogeneous ensemble law gives a parabola in `α`
//! whose minimiser, minimum and gain split are available in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::{
    ensemble_error_homogeneous, gate_simplified, ArchitectureStats, EnsembleSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaggingModel {
    pub e_base: f64,
    pub k1: f64,
    pub k2: f64,
    pub rho0: f64,
    pub variance: f64,
}

/// Split of the optimal ensemble error into its two gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainDecomposition {
    pub base_diversity_gain: f64,
    pub dropout_gain: f64,
    pub minimal_error: f64,
}

/// Raised by [`BaggingModel::model_stats_checked`] when the model's
/// correlation at `α` cannot be realised by an `M`-member ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationWarning {
    pub alpha: f64,
    pub correlation: f64,
    pub bound: f64,
}

impl BaggingModel {
    /// Fixture used by the demo configs and tests. Not calibrated on any data.
    pub const DEMO: BaggingModel = BaggingModel {
        e_base: 0.2,
        k1: 0.1,
        k2: -0.2,
        rho0: 0.6,
        variance: 0.05,
    };

    pub fn new(e_base: f64, k1: f64, k2: f64, rho0: f64, variance: f64) -> Result<Self> {
        let model = Self {
            e_base,
            k1,
            k2,
            rho0,
            variance,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_base >= 0.0 && self.e_base.is_finite()) {
            return Err(invalid("e_base", "must be finite and >= 0"));
        }
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(invalid("k1", "must be finite and > 0"));
        }
        if !(self.k2 < 0.0 && self.k2.is_finite()) {
            return Err(invalid("k2", "must be finite and < 0"));
        }
        if !(self.rho0 > -1.0 && self.rho0 <= 1.0) {
            return Err(invalid("rho0", "must lie in (-1, 1]"));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(invalid("variance", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Checks that the optimum lies in `(0, 1]` and that `ρ(α*)` is a valid
    /// correlation. The model is a local expansion around `α = 1`, so an
    /// optimum outside that range is rejected rather than clamped.
    pub fn check_admissible(&self, ens: EnsembleSpec) -> Result<()> {
        self.validate()?;
        let alpha = self.raw_optimal_alpha(ens);
        if alpha <= 0.0 {
            return Err(Error::InadmissibleModel(format!(
                "optimal retention ratio {alpha} is not positive"
            )));
        }
        let rho = self.correlation_at(alpha);
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InadmissibleModel(format!(
                "correlation {rho} at the optimum leaves [-1, 1]"
            )));
        }
        Ok(())
    }

    pub fn error_at(&self, alpha: f64) -> f64 {
        let drop = 1.0 - alpha;
        self.e_base + self.k1 * drop * drop
    }

    pub fn correlation_at(&self, alpha: f64) -> f64 {
        self.rho0 + self.k2 * (1.0 - alpha)
    }

    /// `(E(α), σ²_base, ρ(α))`. The correlation is not clamped.
    pub fn model_stats(&self, alpha: f64) -> Result<ArchitectureStats> {
        check_alpha(alpha)?;
        Ok(ArchitectureStats {
            expected_error: self.error_at(alpha),
            variance: self.variance,
            correlation: self.correlation_at(alpha),
        })
    }

    /// [`model_stats`](Self::model_stats) plus a warning when `ρ(α)` falls
    /// below `−1/(M−1)` for the intended ensemble.
    pub fn model_stats_checked(
        &self,
        alpha: f64,
        ens: EnsembleSpec,
    ) -> Result<(ArchitectureStats, Option<CorrelationWarning>)> {
        let stats = self.model_stats(alpha)?;
        let warning = (!stats.is_equicorrelation_valid(ens)).then(|| CorrelationWarning {
            alpha,
            correlation: stats.correlation,
            bound: ens.min_correlation(),
        });
        Ok((stats, warning))
    }

    /// Ensemble error at `α`, routed through the generic homogeneous law.
    pub fn ensemble_error_alpha(&self, alpha: f64, ens: EnsembleSpec) -> Result<f64> {
        Ok(ensemble_error_homogeneous(&self.model_stats(alpha)?, ens))
    }

    /// Ensemble error at `α` from the expanded parabola
    /// `E_base + k₁(1−α)² − σ²·((M−1)/M)·[1 − ρ₀ − k₂(1−α)]`.
    pub fn ensemble_error_alpha_expanded(&self, alpha: f64, ens: EnsembleSpec) -> Result<f64> {
        check_alpha(alpha)?;
        let drop = 1.0 - alpha;
        Ok(self.e_base + self.k1 * drop * drop
            - self.variance * ens.shrink() * (1.0 - self.rho0 - self.k2 * drop))
    }

    fn raw_optimal_alpha(&self, ens: EnsembleSpec) -> f64 {
        if ens.size() == 1 {
            return 1.0;
        }
        let m = ens.size() as f64;
        1.0 + self.variance * (m - 1.0) * self.k2 / (2.0 * self.k1 * m)
    }

    /// `α* = 1 + σ²_base(M−1)k₂ / (2k₁M)`; exactly 1 for `M = 1`.
    pub fn optimal_alpha(&self, ens: EnsembleSpec) -> Result<f64> {
        self.check_admissible(ens)?;
        Ok(self.raw_optimal_alpha(ens))
    }

    /// Optimal dropout rate `β* = 1 − α*`.
    pub fn optimal_beta(&self, ens: EnsembleSpec) -> Result<f64> {
        self.check_admissible(ens)?;
        if ens.size() == 1 {
            return Ok(0.0);
        }
        let m = ens.size() as f64;
        Ok(-self.variance * (m - 1.0) * self.k2 / (2.0 * self.k1 * m))
    }

    pub fn minimal_ensemble_error(&self, ens: EnsembleSpec) -> Result<GainDecomposition> {
        self.check_admissible(ens)?;
        let m = ens.size() as f64;
        let base_diversity_gain = self.variance * (1.0 - self.rho0) * (m - 1.0) / m;
        let scale = dropout_gain_scale(ens);
        let dropout_gain =
            self.variance * self.variance * self.k2 * self.k2 / (4.0 * self.k1) * scale;
        Ok(GainDecomposition {
            base_diversity_gain,
            dropout_gain,
            minimal_error: self.e_base - base_diversity_gain - dropout_gain,
        })
    }

    /// Runs the simplified monotonic gate with the optimum as candidate and
    /// `α_old` as baseline. Expected to hold for every admissible model.
    pub fn verify_monotonic_at_optimum(&self, ens: EnsembleSpec, alpha_old: f64) -> Result<bool> {
        check_alpha(alpha_old)?;
        ens.gate_factor()?;
        let alpha_star = self.optimal_alpha(ens)?;
        if alpha_old == alpha_star {
            return Err(invalid("alpha_old", "must differ from the optimum"));
        }
        let candidate = self.model_stats(alpha_star)?;
        let baseline = self.model_stats(alpha_old)?;
        gate_simplified(&candidate, &baseline, ens)
    }

    /// Ensemble error on `points` equally spaced retention ratios ending at 1,
    /// i.e. `α_j = j / points` for `j = 1..=points`.
    pub fn sweep(&self, ens: EnsembleSpec, points: usize) -> Result<Vec<(f64, f64)>> {
        if points == 0 {
            return Err(invalid("points", "sweep needs at least one point"));
        }
        (1..=points)
            .map(|j| {
                let alpha = j as f64 / points as f64;
                Ok((alpha, self.ensemble_error_alpha(alpha, ens)?))
            })
            .collect()
    }
}

/// `(1 − 1/M)²`, the ensemble-size factor of the dropout gain.
pub fn dropout_gain_scale(ens: EnsembleSpec) -> f64 {
    let f = 1.0 - 1.0 / ens.size() as f64;
    f * f
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is outside (0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ensemble_error_delta;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const DEMO: BaggingModel = BaggingModel::DEMO;

    fn ens(m: usize) -> EnsembleSpec {
        EnsembleSpec::new(m).unwrap()
    }

    #[test]
    fn model_stats_examples() {
        let s = DEMO.model_stats(1.0).unwrap();
        assert_eq!((s.expected_error, s.correlation, s.variance), (0.2, 0.6, 0.05));

        let s = DEMO.model_stats(0.9).unwrap();
        assert_abs_diff_eq!(s.expected_error, 0.201, epsilon = 1e-15);
        assert_abs_diff_eq!(s.correlation, 0.58, epsilon = 1e-15);
        assert_eq!(s.variance, 0.05);

        let s = DEMO.model_stats(0.5).unwrap();
        assert_abs_diff_eq!(s.expected_error, 0.225, epsilon = 1e-15);
        assert_abs_diff_eq!(s.correlation, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn alpha_outside_unit_interval_is_rejected() {
        for alpha in [0.0, -0.1, 1.0000001, f64::NAN] {
            assert!(DEMO.model_stats(alpha).is_err());
        }
    }

    #[test]
    fn correlation_warning() {
        let steep = BaggingModel::new(0.2, 0.1, -1.5, 0.2, 0.05).unwrap();
        let (_, warn) = steep.model_stats_checked(0.5, ens(10)).unwrap();
        let warn = warn.expect("rho(0.5) = -0.55 is below -1/9");
        assert_abs_diff_eq!(warn.correlation, -0.55, epsilon = 1e-15);
        let (_, warn) = steep.model_stats_checked(0.95, ens(10)).unwrap();
        assert!(warn.is_none());
    }

    #[test]
    fn ensemble_error_alpha_examples() {
        assert_abs_diff_eq!(
            DEMO.ensemble_error_alpha(1.0, ens(10)).unwrap(),
            0.182,
            epsilon = 1e-15
        );
        let star = DEMO.optimal_alpha(ens(10)).unwrap();
        assert_abs_diff_eq!(
            DEMO.ensemble_error_alpha(star, ens(10)).unwrap(),
            0.1817975,
            epsilon = 1e-12
        );
        for alpha in [0.1, 0.5, 0.99, 1.0] {
            let v = DEMO.ensemble_error_alpha(alpha, ens(1)).unwrap();
            assert_abs_diff_eq!(v, DEMO.error_at(alpha), epsilon = 1e-15);
            assert!(v >= DEMO.ensemble_error_alpha(1.0, ens(1)).unwrap());
        }
    }

    #[test]
    fn both_routes_agree() {
        for m in [1, 2, 10, 77] {
            for j in 1..=200 {
                let alpha = j as f64 / 200.0;
                let a = DEMO.ensemble_error_alpha(alpha, ens(m)).unwrap();
                let b = DEMO.ensemble_error_alpha_expanded(alpha, ens(m)).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn optimal_alpha_examples() {
        assert_abs_diff_eq!(DEMO.optimal_alpha(ens(10)).unwrap(), 0.955, epsilon = 1e-15);
        assert_abs_diff_eq!(DEMO.optimal_beta(ens(10)).unwrap(), 0.045, epsilon = 1e-15);
        assert_eq!(DEMO.optimal_alpha(ens(1)).unwrap(), 1.0);
        assert_eq!(DEMO.optimal_beta(ens(1)).unwrap(), 0.0);

        let flat = BaggingModel { k2: -1e-12, ..DEMO };
        assert_abs_diff_eq!(flat.optimal_alpha(ens(10)).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inadmissible_models() {
        let harsh = BaggingModel { k1: 0.001, k2: -1.0, variance: 0.5, ..DEMO };
        assert!(matches!(
            harsh.optimal_alpha(ens(10)),
            Err(Error::InadmissibleModel(_))
        ));
        // α* = 0.55 but ρ(α*) = 0.2 - 2.7 * 0.45 < -1
        let escaping = BaggingModel { k1: 0.1, k2: -2.7, rho0: 0.2, variance: 0.037037037037, ..DEMO };
        assert!(escaping.check_admissible(ens(10)).is_err());
        assert!(BaggingModel::new(0.2, 0.1, 0.1, 0.6, 0.05).is_err());
        assert!(BaggingModel::new(0.2, 0.0, -0.1, 0.6, 0.05).is_err());
    }

    #[test]
    fn gain_decomposition_examples() {
        let g = DEMO.minimal_ensemble_error(ens(10)).unwrap();
        assert_abs_diff_eq!(g.base_diversity_gain, 0.018, epsilon = 1e-15);
        assert_abs_diff_eq!(g.dropout_gain, 0.0002025, epsilon = 1e-15);
        assert_abs_diff_eq!(g.minimal_error, 0.1817975, epsilon = 1e-15);
        assert_eq!(g.minimal_error, DEMO.e_base - g.base_diversity_gain - g.dropout_gain);

        let star = DEMO.optimal_alpha(ens(10)).unwrap();
        assert_abs_diff_eq!(
            g.minimal_error,
            DEMO.ensemble_error_alpha(star, ens(10)).unwrap(),
            epsilon = 1e-12
        );

        let tight = BaggingModel { rho0: 1.0, ..DEMO };
        assert_eq!(tight.minimal_ensemble_error(ens(10)).unwrap().base_diversity_gain, 0.0);
    }

    #[test]
    fn gains_approach_large_m_limits() {
        let g = DEMO.minimal_ensemble_error(ens(1_000_000)).unwrap();
        let bdg_limit = DEMO.variance * (1.0 - DEMO.rho0);
        let dg_limit = DEMO.variance.powi(2) * DEMO.k2.powi(2) / (4.0 * DEMO.k1);
        assert_relative_eq!(g.base_diversity_gain, bdg_limit, max_relative = 1e-5);
        assert_relative_eq!(g.dropout_gain, dg_limit, max_relative = 1e-5);
    }

    #[test]
    fn beta_scales_with_shrink() {
        for (m, mp) in [(2, 10), (10, 100), (50, 100), (3, 7)] {
            let ratio = DEMO.optimal_beta(ens(m)).unwrap() / DEMO.optimal_beta(ens(mp)).unwrap();
            assert_relative_eq!(ratio, ens(m).shrink() / ens(mp).shrink(), max_relative = 1e-14);
        }
    }

    #[test]
    fn diminishing_returns_factors() {
        assert_eq!(format!("{:.4}", dropout_gain_scale(ens(50))), "0.9604");
        assert_eq!(format!("{:.4}", dropout_gain_scale(ens(100))), "0.9801");
    }

    #[test]
    fn verification_examples() {
        assert!(DEMO.verify_monotonic_at_optimum(ens(10), 1.0).unwrap());
        assert!(DEMO.verify_monotonic_at_optimum(ens(10), 0.5).unwrap());
        let star = DEMO.optimal_alpha(ens(10)).unwrap();
        assert!(DEMO.verify_monotonic_at_optimum(ens(10), star).is_err());
        assert!(DEMO.verify_monotonic_at_optimum(ens(1), 0.5).is_err());

        // Threshold for α_old = 1: 0.6 − (10/9)(−0.0002025/0.05) = 0.6045 > ρ(α*) = 0.591.
        let cand = DEMO.model_stats(star).unwrap();
        assert_abs_diff_eq!(cand.correlation, 0.591, epsilon = 1e-15);
        let base = DEMO.model_stats(0.5).unwrap();
        assert!(ensemble_error_delta(&cand, &base, ens(10)) < 0.0);
    }

    #[test]
    fn sweep_is_u_shaped() {
        let curve = DEMO.sweep(ens(10), 1000).unwrap();
        let star = DEMO.optimal_alpha(ens(10)).unwrap();
        for w in curve.windows(2) {
            let (a0, e0) = w[0];
            let (a1, e1) = w[1];
            if a1 <= star {
                assert!(e1 < e0, "not decreasing at {a0}");
            } else if a0 >= star {
                assert!(e1 > e0, "not increasing at {a0}");
            }
        }
        let m1 = DEMO.sweep(ens(1), 100).unwrap();
        assert!(m1.windows(2).all(|w| w[1].1 < w[0].1));
    }
}

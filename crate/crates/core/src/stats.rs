//! Closed-form ensemble statistics for homogeneous ensembles.
//!
//! An architecture is summarised by the triple `(E, σ², ρ)`: the expected
//! single-learner squared error, the prediction variance of one learner, and
//! the pairwise correlation between independently trained learners. Every
//! function here is pure and works in plain `f64` arithmetic; gates apply no
//! tolerance of their own.
//!
//! Error changes follow the convention `ΔE = E(candidate) − E(baseline)`, so
//! a negative value means the candidate's single learners are more accurate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `(E, σ², ρ)` for one architecture.
///
/// Serialized with the short keys `E`, `var` and `rho`, which is also the
/// shape used on the external proposer wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureStats {
    #[serde(rename = "E")]
    pub expected_error: f64,
    #[serde(rename = "var")]
    pub variance: f64,
    #[serde(rename = "rho")]
    pub correlation: f64,
}

impl ArchitectureStats {
    pub fn new(expected_error: f64, variance: f64, correlation: f64) -> Result<Self> {
        let stats = Self {
            expected_error,
            variance,
            correlation,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.expected_error >= 0.0 && self.expected_error.is_finite()) {
            return Err(invalid("E", format!("{} must be finite and >= 0", self.expected_error)));
        }
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(invalid("var", format!("{} must be finite and >= 0", self.variance)));
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(invalid("rho", format!("{} must lie in [-1, 1]", self.correlation)));
        }
        Ok(())
    }

    /// Whether an `M`-member equicorrelated ensemble with this `ρ` has a
    /// positive semidefinite covariance, i.e. `ρ ≥ −1/(M−1)`.
    pub fn is_equicorrelation_valid(&self, ens: EnsembleSpec) -> bool {
        self.correlation >= ens.min_correlation()
    }
}

/// Ensemble size `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct EnsembleSpec {
    size: usize,
}

impl EnsembleSpec {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("M", "ensemble size must be at least 1"));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `(M−1)/M`, the weight of the diversity term.
    pub fn shrink(&self) -> f64 {
        let m = self.size as f64;
        (m - 1.0) / m
    }

    /// `M/(M−1)`; undefined for a singleton ensemble.
    pub fn gate_factor(&self) -> Result<f64> {
        if self.size < 2 {
            return Err(Error::GateInapplicable(
                "M/(M-1) is undefined for a singleton ensemble".into(),
            ));
        }
        let m = self.size as f64;
        Ok(m / (m - 1.0))
    }

    /// Lowest correlation an equicorrelated `M`-member ensemble can have.
    pub fn min_correlation(&self) -> f64 {
        if self.size < 2 {
            -1.0
        } else {
            -1.0 / (self.size as f64 - 1.0)
        }
    }
}

impl TryFrom<usize> for EnsembleSpec {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Self::new(size)
    }
}

impl From<EnsembleSpec> for usize {
    fn from(ens: EnsembleSpec) -> usize {
        ens.size
    }
}

/// Average ambiguity `σ²·(M−1)(1−ρ)/M` of a homogeneous ensemble.
pub fn average_ambiguity(variance: f64, correlation: f64, ens: EnsembleSpec) -> f64 {
    let m = ens.size() as f64;
    variance * (m - 1.0) * (1.0 - correlation) / m
}

/// Ensemble squared error `E − σ²·((M−1)/M)·(1−ρ)` under homogeneity.
///
/// Defined as `E` minus [`average_ambiguity`], so the two agree bit for bit.
pub fn ensemble_error_homogeneous(stats: &ArchitectureStats, ens: EnsembleSpec) -> f64 {
    stats.expected_error - average_ambiguity(stats.variance, stats.correlation, ens)
}

/// Bias-variance form `p(1−p) + bias² + (σ²/M)·[1 + (M−1)ρ]`.
pub fn ensemble_error_bias_variance(
    click_rate: f64,
    bias_sq: f64,
    variance: f64,
    correlation: f64,
    ens: EnsembleSpec,
) -> f64 {
    let m = ens.size() as f64;
    click_rate * (1.0 - click_rate) + bias_sq + variance / m * (1.0 + (m - 1.0) * correlation)
}

/// Largest candidate correlation that still guarantees improvement:
/// `ρ_old − (M/(M−1))·(ΔE/σ²_new)`.
pub fn monotonic_threshold(
    baseline: &ArchitectureStats,
    delta_error: f64,
    candidate_variance: f64,
    ens: EnsembleSpec,
) -> Result<f64> {
    let factor = ens.gate_factor()?;
    if candidate_variance == 0.0 {
        return Err(Error::GateInapplicable(
            "candidate variance is zero".into(),
        ));
    }
    Ok(baseline.correlation - factor * (delta_error / candidate_variance))
}

/// Accept iff `ρ_candidate` is strictly below [`monotonic_threshold`].
///
/// Exact only when both architectures share the same variance; see
/// [`gate_general`] for the unconditional form.
pub fn gate_simplified(
    candidate: &ArchitectureStats,
    baseline: &ArchitectureStats,
    ens: EnsembleSpec,
) -> Result<bool> {
    let delta = candidate.expected_error - baseline.expected_error;
    let threshold = monotonic_threshold(baseline, delta, candidate.variance, ens)?;
    Ok(candidate.correlation < threshold)
}

/// Accept iff `σ²_c(1−ρ_c) > σ²_b(1−ρ_b) + (M/(M−1))·ΔE`.
///
/// Equivalent to [`ensemble_error_delta`] being negative.
pub fn gate_general(
    candidate: &ArchitectureStats,
    baseline: &ArchitectureStats,
    ens: EnsembleSpec,
) -> Result<bool> {
    let factor = ens.gate_factor()?;
    let delta = candidate.expected_error - baseline.expected_error;
    let lhs = candidate.variance * (1.0 - candidate.correlation);
    let rhs = baseline.variance * (1.0 - baseline.correlation) + factor * delta;
    Ok(lhs > rhs)
}

/// Change in homogeneous ensemble error when replacing `baseline` by
/// `candidate`.
pub fn ensemble_error_delta(
    candidate: &ArchitectureStats,
    baseline: &ArchitectureStats,
    ens: EnsembleSpec,
) -> f64 {
    ensemble_error_homogeneous(candidate, ens) - ensemble_error_homogeneous(baseline, ens)
}

/// Search and deployment costs, in units of one learner training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub n_trials: u64,
    pub ensemble_size: u64,
    pub c_learner: f64,
    #[serde(default)]
    pub c_est: f64,
}

impl CostModel {
    pub fn new(n_trials: u64, ensemble_size: u64, c_learner: f64, c_est: f64) -> Result<Self> {
        let cm = Self {
            n_trials,
            ensemble_size,
            c_learner,
            c_est,
        };
        cm.validate()?;
        Ok(cm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(invalid("n_trials", "must be at least 1"));
        }
        if self.ensemble_size < 1 {
            return Err(invalid("ensemble_size", "must be at least 1"));
        }
        if !(self.c_learner > 0.0 && self.c_learner.is_finite()) {
            return Err(invalid("c_learner", "must be finite and > 0"));
        }
        if !(self.c_est >= 0.0 && self.c_est.is_finite()) {
            return Err(invalid("c_est", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Full-ensemble validation of every candidate: `N·M·c`.
    pub fn traditional(&self) -> f64 {
        self.n_trials as f64 * self.ensemble_size as f64 * self.c_learner
    }

    /// Constant-cost search plus one deployment: `N·(c + c_est) + M·c`.
    pub fn decoupled(&self) -> f64 {
        self.n_trials as f64 * (self.c_learner + self.c_est)
            + self.ensemble_size as f64 * self.c_learner
    }

    pub fn reduction_factor(&self) -> f64 {
        self.traditional() / self.decoupled()
    }
}

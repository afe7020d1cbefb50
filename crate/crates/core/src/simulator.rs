//! Monte-Carlo ground truth for the closed-form laws.
//!
//! A simulated ensemble has `M` learners scored on `n` samples. Sample `i`
//! carries a click probability `p_i`, a Bernoulli label `y_i ~ B(p_i)` and a
//! shared prediction mean `μ_i = p_i + b`. Learner `m` predicts
//! `μ_i + d_mi`, where the deviations are Gaussian with covariance
//! `σ²[(1−ρ)I + ρJ]` across learners:
//!
//! * `ρ ≥ 0`: shared factor, `d_m = σ(√ρ·z₀ + √(1−ρ)·z_m)`
//! * `ρ < 0`: spectral square root,
//!   `d_m = σ(√(1−ρ)·(z_m − z̄) + √(1+(M−1)ρ)·z̄)`
//!
//! The bias `b` is solved from the target error:
//! `E = noise + b² + σ²` with `noise = E[p(1−p)]`.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::derive_seed;
use crate::stats::{
    average_ambiguity, ensemble_error_homogeneous, gate_general, gate_simplified,
    ArchitectureStats, EnsembleSpec,
};

/// How labels and the per-sample prediction mean are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelModel {
    /// Every sample has click probability `p`.
    ConstantP { p: f64 },
    /// `p_i ~ Uniform(low, high)` independently per sample.
    PerSampleP { low: f64, high: f64 },
}

impl Default for LabelModel {
    fn default() -> Self {
        LabelModel::ConstantP { p: 0.2 }
    }
}

impl LabelModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LabelModel::ConstantP { p } if (0.0..=1.0).contains(&p) => Ok(()),
            LabelModel::ConstantP { p } => Err(invalid("p", format!("{p} is outside [0, 1]"))),
            LabelModel::PerSampleP { low, high } if 0.0 <= low && low <= high && high <= 1.0 => {
                Ok(())
            }
            LabelModel::PerSampleP { low, high } => Err(invalid(
                "label_model",
                format!("need 0 <= low <= high <= 1, got [{low}, {high}]"),
            )),
        }
    }

    /// Irreducible label noise `E[p(1−p)]`.
    pub fn noise(&self) -> f64 {
        match *self {
            LabelModel::ConstantP { p } => p * (1.0 - p),
            LabelModel::PerSampleP { low, high } => {
                let mean = (low + high) / 2.0;
                let second = (low * low + low * high + high * high) / 3.0;
                mean - second
            }
        }
    }

    /// Variance of `p_i` across samples; zero for a constant rate.
    pub fn signal_variance(&self) -> f64 {
        match *self {
            LabelModel::ConstantP { .. } => 0.0,
            LabelModel::PerSampleP { low, high } => (high - low) * (high - low) / 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub ensemble_size: usize,
    pub n_samples: usize,
    pub expected_error: f64,
    pub variance: f64,
    pub correlation: f64,
    #[serde(default)]
    pub label_model: LabelModel,
    #[serde(default)]
    pub seed: u64,
    /// Clamp predictions to `[0, 1]`. Distorts the target moments, so formula
    /// validation refuses clamped configs.
    #[serde(default)]
    pub clamp: bool,
}

impl SimConfig {
    pub fn new(stats: ArchitectureStats, ensemble_size: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            ensemble_size,
            n_samples,
            expected_error: stats.expected_error,
            variance: stats.variance,
            correlation: stats.correlation,
            label_model: LabelModel::default(),
            seed,
            clamp: false,
        }
    }

    pub fn with_label_model(mut self, label_model: LabelModel) -> Self {
        self.label_model = label_model;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn target_stats(&self) -> ArchitectureStats {
        ArchitectureStats {
            expected_error: self.expected_error,
            variance: self.variance,
            correlation: self.correlation,
        }
    }

    pub fn ensemble(&self) -> Result<EnsembleSpec> {
        EnsembleSpec::new(self.ensemble_size)
    }

    pub fn validate(&self) -> Result<()> {
        let ens = self.ensemble()?;
        if self.n_samples < 2 {
            return Err(invalid("n_samples", "need at least 2 samples"));
        }
        self.label_model.validate()?;
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(invalid("variance", "must be finite and >= 0"));
        }
        if !(self.correlation <= 1.0 && self.correlation >= -1.0) {
            return Err(invalid("correlation", "must lie in [-1, 1]"));
        }
        if self.correlation < ens.min_correlation() {
            return Err(Error::NotPositiveSemidefinite {
                rho: self.correlation,
                bound: ens.min_correlation(),
                size: ens.size(),
            });
        }
        if !self.expected_error.is_finite() || self.bias_squared() < 0.0 {
            return Err(Error::InconsistentTarget {
                expected_error: self.expected_error,
                noise: self.label_model.noise(),
                variance: self.variance,
            });
        }
        Ok(())
    }

    fn bias_squared(&self) -> f64 {
        let b2 = self.expected_error - self.label_model.noise() - self.variance;
        // Absorb rounding when the target sits exactly on the noise floor.
        if b2 < 0.0 && b2 > -1e-12 {
            0.0
        } else {
            b2
        }
    }

    /// Prediction bias solved from the target error.
    pub fn bias(&self) -> f64 {
        self.bias_squared().max(0.0).sqrt()
    }

    /// Closed-form ensemble error this config should reproduce.
    pub fn predicted_ensemble_error(&self) -> Result<f64> {
        Ok(ensemble_error_homogeneous(&self.target_stats(), self.ensemble()?))
    }
}

/// `M×n` predictions with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    predictions: Array2<f64>,
    labels: Array1<f64>,
}

impl PredictionMatrix {
    pub fn new(predictions: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        let (m, n) = predictions.dim();
        if m == 0 {
            return Err(invalid("predictions", "need at least one learner"));
        }
        if n < 2 {
            return Err(invalid("predictions", "need at least 2 samples"));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} prediction columns but {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            predictions,
            labels,
        })
    }

    pub fn predictions(&self) -> &Array2<f64> {
        &self.predictions
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn ensemble_size(&self) -> usize {
        self.predictions.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.predictions.ncols()
    }

    /// Row average `ŷ_ens`.
    pub fn ensemble_mean(&self) -> Array1<f64> {
        self.predictions
            .mean_axis(Axis(0))
            .expect("at least one learner")
    }
}

/// A simulated ensemble together with the per-sample mean the learners
/// scatter around. The mean is only known in simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedEnsemble {
    pub matrix: PredictionMatrix,
    pub signal: Array1<f64>,
}

/// Per-learner moments measured against the known signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LearnerMoments {
    pub expected_error: f64,
    pub variance: f64,
    /// Pooled pairwise correlation of deviations; `None` for one learner or
    /// zero variance.
    pub pairwise_correlation: Option<f64>,
}

impl SimulatedEnsemble {
    pub fn learner_moments(&self) -> LearnerMoments {
        let preds = self.matrix.predictions();
        let labels = self.matrix.labels();
        let (m, n) = preds.dim();
        let mut sq_err = 0.0;
        let mut dev_sq = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for k in 0..m {
                let d = preds[[k, i]] - self.signal[i];
                let e = labels[i] - preds[[k, i]];
                sum += d;
                sum_sq += d * d;
                sq_err += e * e;
            }
            dev_sq += sum_sq;
            cross += sum * sum - sum_sq;
        }
        let mf = m as f64;
        let nf = n as f64;
        let variance = dev_sq / (nf * mf);
        let pairwise_correlation = (m > 1 && variance > 0.0)
            .then(|| cross / (nf * mf * (mf - 1.0)) / variance);
        LearnerMoments {
            expected_error: sq_err / (nf * mf),
            variance,
            pairwise_correlation,
        }
    }
}

struct SampleGenerator {
    rng: ChaCha8Rng,
    label_model: LabelModel,
    bias: f64,
    shared_weight: f64,
    own_weight: f64,
    spectral: bool,
    clamp: bool,
    z: Vec<f64>,
}

impl SampleGenerator {
    fn new(cfg: &SimConfig) -> Self {
        let sigma = cfg.variance.sqrt();
        let rho = cfg.correlation;
        let m = cfg.ensemble_size as f64;
        let spectral = rho < 0.0;
        let (shared_weight, own_weight) = if spectral {
            (
                sigma * (1.0 + (m - 1.0) * rho).max(0.0).sqrt(),
                sigma * (1.0 - rho).sqrt(),
            )
        } else {
            (sigma * rho.sqrt(), sigma * (1.0 - rho).max(0.0).sqrt())
        };
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            label_model: cfg.label_model,
            bias: cfg.bias(),
            shared_weight,
            own_weight,
            spectral,
            clamp: cfg.clamp,
            z: vec![0.0; cfg.ensemble_size],
        }
    }

    /// Fills `out` with one column of predictions; returns `(label, signal)`.
    fn next_sample(&mut self, out: &mut [f64]) -> (f64, f64) {
        let p = match self.label_model {
            LabelModel::ConstantP { p } => p,
            LabelModel::PerSampleP { low, high } => low + (high - low) * self.rng.random::<f64>(),
        };
        let label = if self.rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let signal = p + self.bias;
        if self.spectral {
            for z in self.z.iter_mut() {
                *z = self.rng.sample(StandardNormal);
            }
            let mean = self.z.iter().sum::<f64>() / self.z.len() as f64;
            for (o, z) in out.iter_mut().zip(&self.z) {
                *o = signal + self.own_weight * (z - mean) + self.shared_weight * mean;
            }
        } else {
            let shared: f64 = self.rng.sample(StandardNormal);
            for o in out.iter_mut() {
                let own: f64 = self.rng.sample(StandardNormal);
                *o = signal + self.shared_weight * shared + self.own_weight * own;
            }
        }
        if self.clamp {
            for o in out.iter_mut() {
                *o = o.clamp(0.0, 1.0);
            }
        }
        (label, signal)
    }
}

/// Draws an `M`-learner ensemble with the configured `(E, σ², ρ)`.
/// Deterministic in `cfg.seed`.
pub fn build_equicorrelated_ensemble(cfg: &SimConfig) -> Result<SimulatedEnsemble> {
    cfg.validate()?;
    let (m, n) = (cfg.ensemble_size, cfg.n_samples);
    let mut gen = SampleGenerator::new(cfg);
    let mut predictions = Array2::<f64>::zeros((m, n));
    let mut labels = Array1::<f64>::zeros(n);
    let mut signal = Array1::<f64>::zeros(n);
    let mut column = vec![0.0; m];
    for i in 0..n {
        let (y, mu) = gen.next_sample(&mut column);
        labels[i] = y;
        signal[i] = mu;
        for (k, v) in column.iter().enumerate() {
            predictions[[k, i]] = *v;
        }
    }
    Ok(SimulatedEnsemble {
        matrix: PredictionMatrix::new(predictions, labels)?,
        signal,
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Mean and `sd/√n` of i.i.d. values (Welford).
    pub fn from_samples(values: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = Welford::default();
        for v in values {
            acc.push(v);
        }
        acc.estimate()
    }

    pub fn z_score(&self, expected: f64) -> f64 {
        let diff = self.mean - expected;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() <= 1e-12 * expected.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }
}

#[derive(Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn estimate(&self) -> Estimate {
        let n = self.count as f64;
        let std_error = if self.count > 1 {
            (self.m2 / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean: self.mean,
            std_error,
        }
    }
}

/// MSE of the row-averaged prediction against the labels.
pub fn empirical_ensemble_error(pm: &PredictionMatrix) -> f64 {
    let mean = pm.ensemble_mean();
    let diff = pm.labels() - &mean;
    diff.mapv(|d| d * d).mean().expect("n >= 2")
}

/// Error-ambiguity split of one prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub avg_single_error: f64,
    pub ambiguity: f64,
    pub ensemble_error: f64,
}

/// Average single-learner MSE, average ambiguity and ensemble MSE.
/// `ensemble_error = avg_single_error − ambiguity` holds as an algebraic
/// identity on every dataset.
pub fn empirical_decomposition(pm: &PredictionMatrix) -> Decomposition {
    let d = decomposition_estimates(pm);
    Decomposition {
        avg_single_error: d.avg_single_error.mean,
        ambiguity: d.ambiguity.mean,
        ensemble_error: d.ensemble_error.mean,
    }
}

/// Per-sample standard errors for the three decomposition terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionEstimates {
    pub avg_single_error: Estimate,
    pub ambiguity: Estimate,
    pub ensemble_error: Estimate,
}

pub fn decomposition_estimates(pm: &PredictionMatrix) -> DecompositionEstimates {
    let preds = pm.predictions();
    let labels = pm.labels();
    let mean = pm.ensemble_mean();
    let m = pm.ensemble_size() as f64;
    let mut single = Welford::default();
    let mut amb = Welford::default();
    let mut ens = Welford::default();
    for (i, column) in preds.axis_iter(Axis(1)).enumerate() {
        let y = labels[i];
        let ybar = mean[i];
        let mut s = 0.0;
        let mut a = 0.0;
        for &p in column.iter() {
            s += (y - p) * (y - p);
            a += (p - ybar) * (p - ybar);
        }
        single.push(s / m);
        amb.push(a / m);
        ens.push((y - ybar) * (y - ybar));
    }
    DecompositionEstimates {
        avg_single_error: single.estimate(),
        ambiguity: amb.estimate(),
        ensemble_error: ens.estimate(),
    }
}

/// Ensemble MSE of a simulated config without materialising the matrix.
/// Draws exactly the same stream as [`build_equicorrelated_ensemble`].
pub fn simulate_ensemble_error(cfg: &SimConfig) -> Result<Estimate> {
    cfg.validate()?;
    let mut gen = SampleGenerator::new(cfg);
    let mut column = vec![0.0; cfg.ensemble_size];
    let mut acc = Welford::default();
    for _ in 0..cfg.n_samples {
        let (y, _) = gen.next_sample(&mut column);
        let ybar = column.iter().sum::<f64>() / column.len() as f64;
        acc.push((y - ybar) * (y - ybar));
    }
    Ok(acc.estimate())
}

/// One closed-form quantity checked against replicated simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityCheck {
    pub name: String,
    pub expected: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
    pub flagged: bool,
}

/// Flag threshold on `|z|` for [`validate_formula_suite`].
pub const Z_FLAG: f64 = 4.0;

impl QuantityCheck {
    fn new(name: &str, expected: f64, est: Estimate) -> Self {
        let z = est.z_score(expected);
        Self {
            name: name.to_string(),
            expected,
            mean: est.mean,
            std_error: est.std_error,
            z,
            flagged: z.is_nan() || z.abs() > Z_FLAG,
        }
    }
}

/// Per-trial values behind a [`ValidationReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trial: usize,
    pub seed: u64,
    pub ensemble_error: f64,
    pub ambiguity: f64,
    pub avg_single_error: f64,
    pub learner_variance: f64,
    pub pairwise_correlation: Option<f64>,
    /// `|ensemble − (single − ambiguity)| / max(|ensemble|, tiny)`.
    pub identity_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: SimConfig,
    pub trials: usize,
    pub irreducible_noise: f64,
    pub bias: f64,
    pub max_identity_rel_error: f64,
    pub checks: Vec<QuantityCheck>,
    pub per_trial: Vec<TrialStats>,
    pub all_within_bounds: bool,
}

/// Replicates `cfg` over `trials` derived seeds and compares the empirical
/// decomposition and learner moments to their closed forms.
pub fn validate_formula_suite(cfg: &SimConfig, trials: usize) -> Result<ValidationReport> {
    cfg.validate()?;
    if trials < 1 {
        return Err(invalid("trials", "need at least one trial"));
    }
    if cfg.clamp {
        return Err(invalid("clamp", "formula validation needs unclamped predictions"));
    }
    let ens = cfg.ensemble()?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(cfg.seed, "trial", t as u64);
            let sim = build_equicorrelated_ensemble(&cfg.clone().with_seed(seed))?;
            let d = empirical_decomposition(&sim.matrix);
            let moments = sim.learner_moments();
            let identity =
                (d.ensemble_error - (d.avg_single_error - d.ambiguity)).abs()
                    / d.ensemble_error.abs().max(f64::MIN_POSITIVE);
            Ok(TrialStats {
                trial: t,
                seed,
                ensemble_error: d.ensemble_error,
                ambiguity: d.ambiguity,
                avg_single_error: d.avg_single_error,
                learner_variance: moments.variance,
                pairwise_correlation: moments.pairwise_correlation,
                identity_rel_error: identity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let target = cfg.target_stats();
    let mut checks = vec![
        QuantityCheck::new(
            "ensemble_error",
            ensemble_error_homogeneous(&target, ens),
            Estimate::from_samples(per_trial.iter().map(|t| t.ensemble_error)),
        ),
        QuantityCheck::new(
            "ambiguity",
            average_ambiguity(cfg.variance, cfg.correlation, ens),
            Estimate::from_samples(per_trial.iter().map(|t| t.ambiguity)),
        ),
        QuantityCheck::new(
            "avg_single_error",
            cfg.expected_error,
            Estimate::from_samples(per_trial.iter().map(|t| t.avg_single_error)),
        ),
        QuantityCheck::new(
            "learner_variance",
            cfg.variance,
            Estimate::from_samples(per_trial.iter().map(|t| t.learner_variance)),
        ),
    ];
    if ens.size() > 1 && cfg.variance > 0.0 {
        checks.push(QuantityCheck::new(
            "pairwise_correlation",
            cfg.correlation,
            Estimate::from_samples(per_trial.iter().filter_map(|t| t.pairwise_correlation)),
        ));
    }
    let max_identity_rel_error = per_trial
        .iter()
        .map(|t| t.identity_rel_error)
        .fold(0.0, f64::max);
    let all_within_bounds = checks.iter().all(|c| !c.flagged);
    Ok(ValidationReport {
        config: cfg.clone(),
        trials,
        irreducible_noise: cfg.label_model.noise(),
        bias: cfg.bias(),
        max_identity_rel_error,
        checks,
        per_trial,
        all_within_bounds,
    })
}

/// A candidate/baseline pair for the empirical gate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatePair {
    pub candidate: ArchitectureStats,
    pub baseline: ArchitectureStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePairOutcome {
    pub pair: GatePair,
    pub gate_general: bool,
    pub gate_simplified: bool,
    pub predicted_delta: f64,
    pub replications: usize,
    /// Replications whose empirical ordering matches the gate verdict.
    pub consistent: usize,
    pub consistency_rate: f64,
}

/// Simulates both members of each pair `replications` times at `n_samples`
/// and counts how often the realised ensemble errors order the way the exact
/// gate predicts.
pub fn gate_soundness_experiment(
    pairs: &[GatePair],
    ens: EnsembleSpec,
    n_samples: usize,
    replications: usize,
    label_model: LabelModel,
    seed: u64,
) -> Result<Vec<GatePairOutcome>> {
    if replications < 1 {
        return Err(invalid("replications", "need at least one replication"));
    }
    pairs
        .iter()
        .enumerate()
        .map(|(k, pair)| {
            let cfg_for = |stats: ArchitectureStats, role: &str, r: usize| {
                let s = derive_seed(seed, role, (k as u64) << 32 | r as u64);
                SimConfig::new(stats, ens.size(), n_samples, s).with_label_model(label_model)
            };
            let general = gate_general(&pair.candidate, &pair.baseline, ens)?;
            let simplified = gate_simplified(&pair.candidate, &pair.baseline, ens)?;
            let consistent = (0..replications)
                .into_par_iter()
                .map(|r| {
                    let c = simulate_ensemble_error(&cfg_for(pair.candidate, "gate-candidate", r))?;
                    let b = simulate_ensemble_error(&cfg_for(pair.baseline, "gate-baseline", r))?;
                    Ok(if general { c.mean < b.mean } else { c.mean >= b.mean })
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|ok| *ok)
                .count();
            Ok(GatePairOutcome {
                pair: *pair,
                gate_general: general,
                gate_simplified: simplified,
                predicted_delta: crate::stats::ensemble_error_delta(
                    &pair.candidate,
                    &pair.baseline,
                    ens,
                ),
                replications,
                consistent,
                consistency_rate: consistent as f64 / replications as f64,
            })
        })
        .collect()
}

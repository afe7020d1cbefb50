//! Dual-proxy estimation of `(E, σ², ρ)`.
//!
//! Two independently seeded instances of a candidate are scored on one
//! validation batch. Their predictions give:
//!
//! * `E`: mean of the two per-instance MSEs,
//! * `ρ`: Pearson correlation between the two prediction vectors,
//! * `σ²`: mean of the two per-instance batch variances (`n − 1` divisor),
//!   measured over the same batch as `ρ` so that `σ²(1 − ρ)` equals half the
//!   mean squared disagreement of the two instances,
//! * the two-point form `mean((a − b)²) / 2`, kept as `pairwise_variance`.
//!
//! Batch-level Pearson mixes input-driven signal into `ρ`; the fidelity
//! report measures that gap against a deviation-based estimator that needs a
//! reference prediction vector.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::{derive_seed, rng_for};
use crate::simulator::{build_equicorrelated_ensemble, SimConfig};
use crate::stats::{ensemble_error_homogeneous, ArchitectureStats, EnsembleSpec};

/// Predictions of two proxy instances plus labels on one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualProxySample {
    preds_a: Vec<f64>,
    preds_b: Vec<f64>,
    labels: Vec<f64>,
}

impl DualProxySample {
    pub fn new(preds_a: Vec<f64>, preds_b: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if preds_a.len() != n || preds_b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "proxy predictions have lengths {} and {} but there are {n} labels",
                preds_a.len(),
                preds_b.len()
            )));
        }
        if n < 2 {
            return Err(invalid("n", "dual-proxy estimation needs at least 2 samples"));
        }
        Ok(Self {
            preds_a,
            preds_b,
            labels,
        })
    }

    pub fn preds_a(&self) -> &[f64] {
        &self.preds_a
    }

    pub fn preds_b(&self) -> &[f64] {
        &self.preds_b
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            preds_a: self.preds_b.clone(),
            preds_b: self.preds_a.clone(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedStats {
    pub stats: ArchitectureStats,
    /// Batch size; zero when the stats were supplied exactly.
    pub n: usize,
    /// Pearson correlation was undefined (a constant prediction vector);
    /// `stats.correlation` is then reported as 0.
    pub degenerate_rho: bool,
    /// `mean((a − b)²) / 2`, an estimate of `σ²(1 − ρ)`.
    pub pairwise_variance: f64,
}

impl EstimatedStats {
    /// Wraps known stats, bypassing estimation.
    pub fn exact(stats: ArchitectureStats) -> Self {
        Self {
            stats,
            n: 0,
            degenerate_rho: false,
            pairwise_variance: stats.variance * (1.0 - stats.correlation),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mse(preds: &[f64], labels: &[f64]) -> f64 {
    preds
        .iter()
        .zip(labels)
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>()
        / labels.len() as f64
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

/// `(var_a, var_b, cov)` with the `n − 1` divisor.
fn covariance_parts(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (ma, mb) = (mean(a), mean(b));
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    let d = (a.len() - 1) as f64;
    (saa / d, sbb / d, sab / d)
}

/// Sample Pearson correlation; `None` when either vector is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || is_constant(a) || is_constant(b) {
        return None;
    }
    let (va, vb, cov) = covariance_parts(a, b);
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

pub fn estimate_stats(ds: &DualProxySample) -> Result<EstimatedStats> {
    let (a, b, y) = (ds.preds_a(), ds.preds_b(), ds.labels());
    let expected_error = (mse(a, y) + mse(b, y)) / 2.0;
    let (va, vb, _) = covariance_parts(a, b);
    let rho = pearson(a, b);
    let pairwise_variance = a
        .iter()
        .zip(b)
        .map(|(x, z)| (x - z) * (x - z) / 2.0)
        .sum::<f64>()
        / y.len() as f64;
    Ok(EstimatedStats {
        stats: ArchitectureStats {
            expected_error,
            variance: (va + vb) / 2.0,
            correlation: rho.unwrap_or(0.0),
        },
        n: y.len(),
        degenerate_rho: rho.is_none(),
        pairwise_variance,
    })
}

/// `E(candidate) − E(baseline)`; negative means the candidate is better.
pub fn estimate_delta_e(candidate: &EstimatedStats, baseline: &ArchitectureStats) -> f64 {
    candidate.stats.expected_error - baseline.expected_error
}

/// Pearson correlation of the two instances' deviations from a reference
/// prediction vector (the true mean function in simulation, or an existing
/// ensemble's average in practice).
pub fn reference_deviation_correlation(
    ds: &DualProxySample,
    reference: &[f64],
) -> Result<Option<f64>> {
    if reference.len() != ds.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} entries, batch has {}",
            reference.len(),
            ds.len()
        )));
    }
    let da: Vec<f64> = ds.preds_a().iter().zip(reference).map(|(p, r)| p - r).collect();
    let db: Vec<f64> = ds.preds_b().iter().zip(reference).map(|(p, r)| p - r).collect();
    Ok(pearson(&da, &db))
}

/// Batches below this size are flagged as high-variance.
pub const SMALL_N: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    /// Value the estimator converges to under the simulated model.
    pub target: f64,
    /// The nominal architecture quantity it stands in for.
    pub nominal: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    pub nominal_bias: f64,
    pub samples: usize,
}

impl EstimatorSummary {
    fn new(estimator: &str, target: f64, nominal: f64, values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let rmse = (values.iter().map(|v| (v - target) * (v - target)).sum::<f64>() / n).sqrt();
        Self {
            estimator: estimator.to_string(),
            target,
            nominal,
            mean,
            bias: mean - target,
            rmse,
            nominal_bias: mean - nominal,
            samples: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub n: usize,
    pub small_n: bool,
    pub degenerate_count: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// Pearson correlation, across architectures drawn around the config,
    /// between the dual-proxy error estimate and the true ensemble error.
    /// Reported only; there is no pass threshold.
    pub proxy_error_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub config: SimConfig,
    pub reps: usize,
    pub rows: Vec<FidelityRow>,
}

impl FidelityReport {
    pub fn row(&self, n: usize) -> Option<&FidelityRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

impl FidelityRow {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == name)
    }
}

struct Draw {
    est: EstimatedStats,
    deviation_rho: Option<f64>,
}

fn draw_proxies(cfg: &SimConfig, n: usize, seed: u64) -> Result<Draw> {
    let proxy_cfg = SimConfig {
        ensemble_size: 2,
        n_samples: n,
        seed,
        ..cfg.clone()
    };
    let sim = build_equicorrelated_ensemble(&proxy_cfg)?;
    let preds = sim.matrix.predictions();
    let ds = DualProxySample::new(
        preds.row(0).to_vec(),
        preds.row(1).to_vec(),
        sim.matrix.labels().to_vec(),
    )?;
    Ok(Draw {
        est: estimate_stats(&ds)?,
        deviation_rho: reference_deviation_correlation(&ds, sim.signal.as_slice().expect("contiguous"))?,
    })
}

/// Measures how well dual-proxy estimates recover the simulated truth at
/// each batch size in `n_grid`.
///
/// `cfg.ensemble_size` is the deployment ensemble size used for the true
/// ensemble error; proxies are always two instances.
pub fn estimation_fidelity_report(
    cfg: &SimConfig,
    n_grid: &[usize],
    reps: usize,
) -> Result<FidelityReport> {
    if reps < 2 {
        return Err(invalid("reps", "need at least 2 replications"));
    }
    if n_grid.is_empty() {
        return Err(invalid("n_grid", "need at least one batch size"));
    }
    let deploy = cfg.ensemble()?;
    let check = SimConfig {
        n_samples: n_grid.iter().copied().min().unwrap_or(2),
        ..cfg.clone()
    };
    check.validate()?;

    let sigma2 = cfg.variance;
    let rho = cfg.correlation;
    let signal_var = cfg.label_model.signal_variance();
    let total_var = signal_var + sigma2;
    let rho_effective = if total_var > 0.0 {
        (signal_var + rho * sigma2) / total_var
    } else {
        rho
    };

    let rows = n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let draws = (0..reps)
                .into_par_iter()
                .map(|r| draw_proxies(cfg, n, derive_seed(cfg.seed, "fidelity", (gi as u64) << 32 | r as u64)))
                .collect::<Result<Vec<_>>>()?;
            let degenerate_count = draws.iter().filter(|d| d.est.degenerate_rho).count();
            let pick = |f: &dyn Fn(&Draw) -> Option<f64>| -> Vec<f64> {
                draws.iter().filter_map(f).collect()
            };
            let estimators = vec![
                EstimatorSummary::new(
                    "expected_error",
                    cfg.expected_error,
                    cfg.expected_error,
                    &pick(&|d| Some(d.est.stats.expected_error)),
                ),
                EstimatorSummary::new(
                    "variance",
                    total_var,
                    sigma2,
                    &pick(&|d| Some(d.est.stats.variance)),
                ),
                EstimatorSummary::new(
                    "pairwise_variance",
                    sigma2 * (1.0 - rho),
                    sigma2,
                    &pick(&|d| Some(d.est.pairwise_variance)),
                ),
                EstimatorSummary::new(
                    "correlation",
                    rho_effective,
                    rho,
                    &pick(&|d| (!d.est.degenerate_rho).then_some(d.est.stats.correlation)),
                ),
                EstimatorSummary::new(
                    "deviation_correlation",
                    rho,
                    rho,
                    &pick(&|d| d.deviation_rho),
                ),
                EstimatorSummary::new(
                    "diversity_term",
                    sigma2 * (1.0 - rho),
                    sigma2 * (1.0 - rho),
                    &pick(&|d| Some(d.est.stats.variance * (1.0 - d.est.stats.correlation))),
                ),
            ];
            let proxy_error_correlation = proxy_error_correlation(cfg, deploy, n, reps, gi)?;
            Ok(FidelityRow {
                n,
                small_n: n < SMALL_N,
                degenerate_count,
                estimators,
                proxy_error_correlation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FidelityReport {
        config: cfg.clone(),
        reps,
        rows,
    })
}

fn proxy_error_correlation(
    cfg: &SimConfig,
    deploy: EnsembleSpec,
    n: usize,
    reps: usize,
    grid_index: usize,
) -> Result<Option<f64>> {
    let floor = cfg.label_model.noise() + cfg.variance;
    let pairs = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(cfg.seed, "fidelity-arch", (grid_index as u64) << 32 | r as u64);
            let e = floor + (cfg.expected_error - floor).max(1e-3) * rng.random_range(0.5..1.5);
            let rho = (cfg.correlation + rng.random_range(-0.2..0.2)).clamp(-0.9, 0.95);
            let arch = SimConfig {
                expected_error: e,
                correlation: rho,
                ..cfg.clone()
            };
            let draw = draw_proxies(&arch, n, derive_seed(cfg.seed, "fidelity-arch-sim", (grid_index as u64) << 32 | r as u64))?;
            let truth = ensemble_error_homogeneous(&arch.target_stats(), deploy);
            Ok((draw.est.stats.expected_error, truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let (est, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(pearson(&est, &truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample() -> DualProxySample {
        DualProxySample::new(
            vec![0.2, 0.8, 0.5, 0.4],
            vec![0.3, 0.7, 0.6, 0.4],
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn worked_example() {
        let est = estimate_stats(&sample()).unwrap();
        assert_abs_diff_eq!(est.stats.expected_error, 0.12375, epsilon = 1e-15);
        // cov = 0.13/3, var_a = 0.1875/3, var_b = 0.1/3
        assert_abs_diff_eq!(est.stats.correlation, 0.13 / (0.1875f64 * 0.1).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(est.stats.correlation, 0.9494, epsilon = 1e-4);
        assert_abs_diff_eq!(est.pairwise_variance, 0.00375, epsilon = 1e-15);
        assert_abs_diff_eq!(est.stats.variance, (0.1875 + 0.1) / 6.0, epsilon = 1e-15);
        assert!(!est.degenerate_rho);
        assert_eq!(est.n, 4);
    }

    #[test]
    fn identical_instances() {
        let a = vec![0.2, 0.8, 0.5, 0.4];
        let ds = DualProxySample::new(a.clone(), a, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let est = estimate_stats(&ds).unwrap();
        assert_eq!(est.stats.correlation, 1.0);
        assert_eq!(est.pairwise_variance, 0.0);
    }

    #[test]
    fn constant_instance_is_degenerate() {
        let ds = DualProxySample::new(
            vec![0.3; 4],
            vec![0.3, 0.7, 0.6, 0.4],
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let est = estimate_stats(&ds).unwrap();
        assert!(est.degenerate_rho);
        assert_eq!(est.stats.correlation, 0.0);
    }

    #[test]
    fn shape_errors() {
        assert!(DualProxySample::new(vec![0.1, 0.2], vec![0.1], vec![0.0, 1.0]).is_err());
        assert!(DualProxySample::new(vec![0.1], vec![0.1], vec![0.0]).is_err());
    }

    #[test]
    fn delta_convention() {
        let base = ArchitectureStats::new(0.25, 0.05, 0.5).unwrap();
        let at = |e| EstimatedStats::exact(ArchitectureStats::new(e, 0.05, 0.5).unwrap());
        assert_abs_diff_eq!(estimate_delta_e(&at(0.24), &base), -0.01, epsilon = 1e-15);
        assert_eq!(estimate_delta_e(&at(0.25), &base), 0.0);
        assert_abs_diff_eq!(estimate_delta_e(&at(0.27), &base), 0.02, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_flags_small_batches() {
        let cfg = SimConfig::new(ArchitectureStats::new(0.25, 0.05, 0.2).unwrap(), 10, 2, 1);
        let report = estimation_fidelity_report(&cfg, &[2, 100], 10).unwrap();
        assert!(report.row(2).unwrap().small_n);
        assert!(!report.row(100).unwrap().small_n);
        assert!(estimation_fidelity_report(&cfg, &[100], 1).is_err());
    }
}

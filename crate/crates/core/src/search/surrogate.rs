//! Constrained continuous search over a bounded parameter box.
//!
//! Minimizes the surrogate ensemble error subject to
//! `ρ̂(x) < ρ_old − (M/(M−1))·ΔÊ(x)/σ̂²(x)` with a quadratic penalty whose
//! weight grows geometrically, projected gradient descent with central
//! finite differences, and quasi-random multistart.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagging::BaggingModel;
use crate::error::{invalid, Error, Result};
use crate::seed::rng_for;
use crate::stats::{ensemble_error_homogeneous, ArchitectureStats, EnsembleSpec};

/// Hatted estimates as functions of the parameter vector. Must be total on
/// the problem's bounds.
pub trait SurrogateModel: Sync {
    fn ensemble_error(&self, x: &[f64]) -> Result<f64>;
    fn correlation(&self, x: &[f64]) -> Result<f64>;
    /// `E(x) − E(baseline)`.
    fn delta_error(&self, x: &[f64]) -> Result<f64>;
    fn variance(&self, x: &[f64]) -> Result<f64>;
}

pub struct ContinuousProblem<'a> {
    pub bounds: Vec<(f64, f64)>,
    pub baseline: ArchitectureStats,
    pub surrogate: &'a dyn SurrogateModel,
}

impl ContinuousProblem<'_> {
    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(invalid("bounds", "need at least one dimension"));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(invalid("bounds", format!("[{lo}, {hi}] is not a finite interval")));
            }
        }
        self.baseline.validate()
    }

    /// Constraint value `ρ̂ − threshold`; feasible iff negative.
    pub fn constraint(&self, x: &[f64], ens: EnsembleSpec) -> Result<f64> {
        let factor = ens.gate_factor()?;
        let var = self.surrogate.variance(x)?;
        if var <= 0.0 {
            return Err(Error::GateInapplicable(format!("surrogate variance {var} at {x:?}")));
        }
        let threshold = self.baseline.correlation - factor * self.surrogate.delta_error(x)? / var;
        Ok(self.surrogate.correlation(x)? - threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub penalty_stages: usize,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// The penalty targets `constraint ≤ −margin` so that the strict
    /// inequality survives rounding.
    pub constraint_margin: f64,
    pub seed: u64,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iterations: 500,
            penalty_initial: 10.0,
            penalty_growth: 10.0,
            penalty_stages: 6,
            fd_step: 1e-6,
            constraint_margin: 1e-7,
            seed: 0,
        }
    }
}

impl SurrogateOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(invalid("starts", "must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if self.penalty_stages == 0 {
            return Err(invalid("penalty_stages", "must be at least 1"));
        }
        if !(self.penalty_initial > 0.0 && self.penalty_growth >= 1.0) {
            return Err(invalid("penalty_initial", "weights must be positive and non-decreasing"));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 1.0) {
            return Err(invalid("fd_step", "must lie in (0, 1)"));
        }
        if self.constraint_margin.is_nan() || self.constraint_margin < 0.0 {
            return Err(invalid("constraint_margin", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start_index: usize,
    pub initial: Vec<f64>,
    pub point: Vec<f64>,
    pub ensemble_error: f64,
    pub constraint: f64,
    pub feasible: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateResult {
    pub point: Vec<f64>,
    pub feasible: bool,
    pub ensemble_error: f64,
    /// `threshold − ρ̂` at the returned point.
    pub margin: f64,
    pub best_start: usize,
    pub history: Vec<StartOutcome>,
}

fn primes(count: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(count);
    let mut n = 2;
    while out.len() < count {
        if out.iter().take_while(|p| *p * *p <= n).all(|p| n % p != 0) {
            out.push(n);
        }
        n += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        inv += (i % base) as f64 * f;
        i /= base;
        f /= base as f64;
    }
    inv
}

/// Shifted Halton points in the box. The first `k` points do not depend on
/// how many are requested.
pub fn start_points(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let bases = primes(bounds.len());
    let mut rng = rng_for(seed, "surrogate-shift", 0);
    let shift: Vec<f64> = bounds.iter().map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|k| {
            bounds
                .iter()
                .zip(&bases)
                .zip(&shift)
                .map(|((&(lo, hi), &b), &s)| {
                    let u = (radical_inverse(k as u64 + 1, b) + s).fract();
                    lo + u * (hi - lo)
                })
                .collect()
        })
        .collect()
}

struct Penalized<'p, 'a> {
    problem: &'p ContinuousProblem<'a>,
    ens: EnsembleSpec,
    margin: f64,
}

impl Penalized<'_, '_> {
    fn value(&self, x: &[f64], weight: f64) -> Result<f64> {
        let excess = (self.problem.constraint(x, self.ens)? + self.margin).max(0.0);
        Ok(self.problem.surrogate.ensemble_error(x)? + weight * excess * excess)
    }

    fn gradient(&self, x: &[f64], weight: f64, rel_step: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for (i, &(lo, hi)) in self.problem.bounds.iter().enumerate() {
            let h = rel_step * x[i].abs().max(1.0);
            let up = (x[i] + h).min(hi);
            let down = (x[i] - h).max(lo);
            if up <= down {
                continue;
            }
            probe[i] = up;
            let f_up = self.value(&probe, weight)?;
            probe[i] = down;
            let f_down = self.value(&probe, weight)?;
            probe[i] = x[i];
            g[i] = (f_up - f_down) / (up - down);
        }
        Ok(g)
    }
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn descend(
    pen: &Penalized<'_, '_>,
    start: &[f64],
    opts: &SurrogateOptions,
) -> Result<(Vec<f64>, usize)> {
    let bounds = &pen.problem.bounds;
    let mut x = start.to_vec();
    project(&mut x, bounds);
    let mut iterations = 0;
    let mut weight = opts.penalty_initial;
    for _ in 0..opts.penalty_stages {
        let mut step = 1.0;
        let mut fx = pen.value(&x, weight)?;
        for _ in 0..opts.max_iterations {
            iterations += 1;
            let g = pen.gradient(&x, weight, opts.fd_step)?;
            let mut moved = false;
            while step > 1e-30 {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
                project(&mut trial, bounds);
                let decrease: f64 = x.iter().zip(&trial).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
                if decrease <= 0.0 {
                    break;
                }
                let ft = pen.value(&trial, weight)?;
                if fx - ft >= 1e-4 * decrease {
                    let shift = x.iter().zip(&trial).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    x = trial;
                    fx = ft;
                    step *= 2.0;
                    moved = shift > 1e-14;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        weight *= opts.penalty_growth;
    }
    Ok((x, iterations))
}

/// Best feasible point over all starts (lowest surrogate ensemble error,
/// ties to the lower start index). Without a feasible start, the point with
/// the smallest constraint value is returned with `feasible = false`.
pub fn surrogate_optimize(
    problem: &ContinuousProblem<'_>,
    ens: EnsembleSpec,
    opts: &SurrogateOptions,
) -> Result<SurrogateResult> {
    problem.validate()?;
    opts.validate()?;
    ens.gate_factor()?;
    let pen = Penalized {
        problem,
        ens,
        margin: opts.constraint_margin,
    };
    let starts = start_points(&problem.bounds, opts.starts, opts.seed);
    let history: Vec<StartOutcome> = starts
        .into_par_iter()
        .enumerate()
        .map(|(start_index, initial)| {
            let wrap = |e: Error| Error::Surrogate {
                start: start_index,
                message: e.to_string(),
            };
            let (point, iterations) = descend(&pen, &initial, opts).map_err(wrap)?;
            let constraint = problem.constraint(&point, ens).map_err(wrap)?;
            let ensemble_error = problem.surrogate.ensemble_error(&point).map_err(wrap)?;
            Ok(StartOutcome {
                start_index,
                initial,
                point,
                ensemble_error,
                constraint,
                feasible: constraint < 0.0,
                iterations,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, s) in history.iter().enumerate().skip(1) {
        let b = &history[best];
        let better = match (s.feasible, b.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => s.ensemble_error < b.ensemble_error,
            (false, false) => s.constraint < b.constraint,
        };
        if better {
            best = i;
        }
    }
    let b = &history[best];
    Ok(SurrogateResult {
        point: b.point.clone(),
        feasible: b.feasible,
        ensemble_error: b.ensemble_error,
        margin: -b.constraint,
        best_start: best,
        history,
    })
}

/// The bagging curves as a one-parameter surrogate over `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaggingSurrogate {
    pub model: BaggingModel,
    pub ensemble: EnsembleSpec,
    pub baseline: ArchitectureStats,
}

impl BaggingSurrogate {
    /// Baseline is the model at `alpha_old`.
    pub fn new(model: BaggingModel, ensemble: EnsembleSpec, alpha_old: f64) -> Result<Self> {
        Ok(Self {
            model,
            ensemble,
            baseline: model.model_stats(alpha_old)?,
        })
    }

    pub fn problem(&self, lower: f64) -> ContinuousProblem<'_> {
        ContinuousProblem {
            bounds: vec![(lower, 1.0)],
            baseline: self.baseline,
            surrogate: self,
        }
    }
}

impl SurrogateModel for BaggingSurrogate {
    fn ensemble_error(&self, x: &[f64]) -> Result<f64> {
        let s = ArchitectureStats {
            expected_error: self.model.error_at(x[0]),
            variance: self.model.variance,
            correlation: self.model.correlation_at(x[0]),
        };
        Ok(ensemble_error_homogeneous(&s, self.ensemble))
    }

    fn correlation(&self, x: &[f64]) -> Result<f64> {
        Ok(self.model.correlation_at(x[0]))
    }

    fn delta_error(&self, x: &[f64]) -> Result<f64> {
        Ok(self.model.error_at(x[0]) - self.baseline.expected_error)
    }

    fn variance(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.model.variance)
    }
}

/// A one-parameter family given as a table of stats, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSurrogate {
    /// Sorted by `x`, strictly increasing.
    pub rows: Vec<TableRow>,
    pub ensemble: EnsembleSpec,
    pub baseline: ArchitectureStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub x: f64,
    #[serde(rename = "E")]
    pub expected_error: f64,
    #[serde(rename = "var")]
    pub variance: f64,
    #[serde(rename = "rho")]
    pub correlation: f64,
}

impl TableSurrogate {
    /// The baseline is the interpolated row at `x_old`.
    pub fn new(mut rows: Vec<TableRow>, ensemble: EnsembleSpec, x_old: f64) -> Result<Self> {
        rows.sort_by(|a, b| a.x.total_cmp(&b.x));
        if rows.len() < 2 {
            return Err(invalid("table", "need at least two rows"));
        }
        if rows.windows(2).any(|w| w[0].x >= w[1].x) {
            return Err(invalid("table", "x values must be distinct"));
        }
        for r in &rows {
            ArchitectureStats::new(r.expected_error, r.variance, r.correlation)?;
            if r.variance <= 0.0 {
                return Err(invalid("table", format!("variance at x = {} must be positive", r.x)));
            }
        }
        let mut table = Self {
            rows,
            ensemble,
            baseline: ArchitectureStats {
                expected_error: 0.0,
                variance: 1.0,
                correlation: 0.0,
            },
        };
        let (lo, hi) = table.domain();
        if !(lo..=hi).contains(&x_old) {
            return Err(invalid("x_old", format!("{x_old} outside table domain [{lo}, {hi}]")));
        }
        table.baseline = table.stats_at(x_old);
        Ok(table)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.rows[0].x, self.rows[self.rows.len() - 1].x)
    }

    pub fn stats_at(&self, x: f64) -> ArchitectureStats {
        let i = self.rows.partition_point(|r| r.x <= x).clamp(1, self.rows.len() - 1);
        let (a, b) = (&self.rows[i - 1], &self.rows[i]);
        let t = ((x - a.x) / (b.x - a.x)).clamp(0.0, 1.0);
        let lerp = |p: f64, q: f64| p + t * (q - p);
        ArchitectureStats {
            expected_error: lerp(a.expected_error, b.expected_error),
            variance: lerp(a.variance, b.variance),
            correlation: lerp(a.correlation, b.correlation),
        }
    }

    pub fn problem(&self) -> ContinuousProblem<'_> {
        ContinuousProblem {
            bounds: vec![self.domain()],
            baseline: self.baseline,
            surrogate: self,
        }
    }
}

impl SurrogateModel for TableSurrogate {
    fn ensemble_error(&self, x: &[f64]) -> Result<f64> {
        Ok(ensemble_error_homogeneous(&self.stats_at(x[0]), self.ensemble))
    }

    fn correlation(&self, x: &[f64]) -> Result<f64> {
        Ok(self.stats_at(x[0]).correlation)
    }

    fn delta_error(&self, x: &[f64]) -> Result<f64> {
        Ok(self.stats_at(x[0]).expected_error - self.baseline.expected_error)
    }

    fn variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.stats_at(x[0]).variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens() -> EnsembleSpec {
        EnsembleSpec::new(10).unwrap()
    }

    #[test]
    fn halton_prefix_consistency() {
        let b = [(0.0, 1.0), (-2.0, 2.0)];
        let few = start_points(&b, 3, 9);
        let many = start_points(&b, 10, 9);
        assert_eq!(few[..], many[..3]);
        assert!(many.iter().all(|p| (0.0..1.0).contains(&p[0]) && (-2.0..2.0).contains(&p[1])));
        assert_ne!(start_points(&b, 3, 10), few);
        assert_eq!(primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn bagging_finds_alpha_star() {
        let m = BaggingModel::DEMO;
        let s = BaggingSurrogate::new(m, ens(), 1.0).unwrap();
        let res = surrogate_optimize(&s.problem(1e-3), ens(), &SurrogateOptions::default()).unwrap();
        assert!(res.feasible);
        assert!((res.point[0] - 0.955).abs() < 1e-6, "{:?}", res.point);
        assert!(res.margin > 0.0);
    }

    #[test]
    fn strictly_worse_family_is_infeasible() {
        let m = BaggingModel::new(0.2, 50.0, -1e-3, 0.6, 0.05).unwrap();
        let mut s = BaggingSurrogate::new(m, ens(), 1.0).unwrap();
        s.baseline.expected_error -= 0.01;
        let res = surrogate_optimize(&s.problem(1e-3), ens(), &SurrogateOptions::default()).unwrap();
        assert!(!res.feasible);
        assert!(res.margin < 0.0);
    }

    struct Flat(ArchitectureStats);
    impl SurrogateModel for Flat {
        fn ensemble_error(&self, _: &[f64]) -> Result<f64> {
            Ok(ensemble_error_homogeneous(&self.0, EnsembleSpec::new(10).unwrap()))
        }
        fn correlation(&self, _: &[f64]) -> Result<f64> {
            Ok(self.0.correlation)
        }
        fn delta_error(&self, _: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn variance(&self, _: &[f64]) -> Result<f64> {
            Ok(self.0.variance)
        }
    }

    #[test]
    fn constant_surrogate_is_infeasible() {
        let base = ArchitectureStats::new(0.25, 0.05, 0.5).unwrap();
        let flat = Flat(base);
        let problem = ContinuousProblem {
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            baseline: base,
            surrogate: &flat,
        };
        let res = surrogate_optimize(&problem, ens(), &SurrogateOptions::default()).unwrap();
        assert!(!res.feasible);
        assert_eq!(res.margin, 0.0);
    }

    struct Failing;
    impl SurrogateModel for Failing {
        fn ensemble_error(&self, _: &[f64]) -> Result<f64> {
            Err(invalid("x", "boom"))
        }
        fn correlation(&self, _: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn delta_error(&self, _: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn variance(&self, _: &[f64]) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn callback_errors_carry_start_index() {
        let problem = ContinuousProblem {
            bounds: vec![(0.0, 1.0)],
            baseline: ArchitectureStats::new(0.25, 0.05, 0.5).unwrap(),
            surrogate: &Failing,
        };
        let opts = SurrogateOptions { starts: 1, ..Default::default() };
        assert!(matches!(
            surrogate_optimize(&problem, ens(), &opts),
            Err(Error::Surrogate { start: 0, .. })
        ));
    }

    #[test]
    fn table_interpolation_matches_bagging() {
        let m = BaggingModel::DEMO;
        let rows: Vec<TableRow> = (0..=200)
            .map(|j| {
                let x = 0.8 + 0.2 * j as f64 / 200.0;
                TableRow { x, expected_error: m.error_at(x), variance: m.variance, correlation: m.correlation_at(x) }
            })
            .collect();
        let t = TableSurrogate::new(rows, ens(), 1.0).unwrap();
        assert_eq!(t.baseline, m.model_stats(1.0).unwrap());
        let res = surrogate_optimize(&t.problem(), ens(), &SurrogateOptions::default()).unwrap();
        assert!(res.feasible);
        assert!((res.point[0] - 0.955).abs() < 2e-3);
    }

    #[test]
    fn deterministic_merge() {
        let s = BaggingSurrogate::new(BaggingModel::DEMO, ens(), 0.5).unwrap();
        let opts = SurrogateOptions { seed: 4, ..Default::default() };
        let a = surrogate_optimize(&s.problem(1e-3), ens(), &opts).unwrap();
        let b = surrogate_optimize(&s.problem(1e-3), ens(), &opts).unwrap();
        assert_eq!(a, b);
    }
}

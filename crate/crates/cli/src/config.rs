//! Run configuration: one optional section per subcommand, loaded from TOML
//! or JSON and overridden by flags.

use std::path::{Path, PathBuf};

use ensgate_core::bagging::BaggingModel;
use ensgate_core::search::surrogate::{SurrogateOptions, TableRow};
use ensgate_core::search::{BinSampling, RandomProposerConfig, SearchSettings};
use ensgate_core::simulator::{GatePair, LabelModel, SimConfig};
use ensgate_core::{ArchitectureStats, CostModel, EnsembleSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub verify_theory: VerifyTheoryConfig,
    pub optimize_alpha: OptimizeAlphaConfig,
    pub cost: CostConfig,
    pub search: SearchConfig,
    pub surrogate: SurrogateConfig,
    pub estimate_fidelity: EstimateFidelityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            format: Format::Json,
            out: None,
            verify_theory: Default::default(),
            optimize_alpha: Default::default(),
            cost: Default::default(),
            search: Default::default(),
            surrogate: Default::default(),
            estimate_fidelity: Default::default(),
        }
    }
}

fn stats(e: f64, var: f64, rho: f64) -> ArchitectureStats {
    ArchitectureStats {
        expected_error: e,
        variance: var,
        correlation: rho,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateExperimentConfig {
    pub n_samples: usize,
    pub replications: usize,
    /// Required share of replications whose realised ordering matches the
    /// exact gate.
    pub min_consistency: f64,
    pub pairs: Vec<GatePair>,
}

impl Default for GateExperimentConfig {
    fn default() -> Self {
        let baseline = stats(0.25, 0.05, 0.5);
        Self {
            n_samples: 1_000_000,
            replications: 5,
            min_consistency: 0.99,
            pairs: vec![
                GatePair {
                    candidate: stats(0.24, 0.05, 0.3),
                    baseline,
                },
                GatePair {
                    candidate: stats(0.26, 0.05, 0.6),
                    baseline,
                },
                GatePair {
                    candidate: stats(0.27, 0.08, 0.2),
                    baseline,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyTheoryConfig {
    pub ensemble_size: usize,
    pub n_samples: usize,
    pub trials: usize,
    pub target: ArchitectureStats,
    pub label_model: LabelModel,
    /// Random closed-form triples for the exact gate checks.
    pub exact_gate_triples: usize,
    pub gate: GateExperimentConfig,
}

impl Default for VerifyTheoryConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 10,
            n_samples: 100_000,
            trials: 30,
            target: stats(0.25, 0.05, 0.2),
            label_model: LabelModel::default(),
            exact_gate_triples: 10_000,
            gate: GateExperimentConfig::default(),
        }
    }
}

impl VerifyTheoryConfig {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig::new(self.target, self.ensemble_size, self.n_samples, seed)
            .with_label_model(self.label_model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeAlphaConfig {
    pub model: BaggingModel,
    pub ensemble_size: usize,
    pub sweep_points: usize,
    pub alpha_old: Vec<f64>,
    pub diminishing_sizes: Vec<usize>,
}

impl Default for OptimizeAlphaConfig {
    fn default() -> Self {
        Self {
            model: BaggingModel::DEMO,
            ensemble_size: 10,
            sweep_points: 1000,
            alpha_old: vec![1.0, 0.9, 0.5],
            diminishing_sizes: vec![10, 50, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub n_trials: u64,
    pub ensemble_size: u64,
    pub c_learner: f64,
    pub c_est: f64,
    /// The sweep covers `N = 10^0 .. 10^sweep_decades`.
    pub sweep_decades: u32,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            ensemble_size: 100,
            c_learner: 1.0,
            c_est: 0.0,
            sweep_decades: 7,
        }
    }
}

impl CostConfig {
    pub fn model(&self) -> Result<CostModel, CliError> {
        Ok(CostModel::new(self.n_trials, self.ensemble_size, self.c_learner, self.c_est)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProposerKind {
    Scripted,
    #[default]
    Random,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Exact,
    Simulated {
        n_samples: usize,
        #[serde(default)]
        label_model: LabelModel,
    },
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig::Simulated {
            n_samples: 10_000,
            label_model: LabelModel::default(),
        }
    }
}

/// Keeps random candidates above the default simulator's error floor
/// (label noise 0.16 plus variance 0.05).
fn search_random_defaults() -> RandomProposerConfig {
    RandomProposerConfig {
        min_error: 0.215,
        ..RandomProposerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub bins: usize,
    pub ensemble_size: usize,
    pub bin_sampling: BinSampling,
    pub baseline: ArchitectureStats,
    pub proposer: ProposerKind,
    pub proposer_url: Option<String>,
    pub proposer_timeout_ms: u64,
    pub random: RandomProposerConfig,
    pub scripted: Vec<ArchitectureStats>,
    pub evaluator: EvaluatorConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            bins: 4,
            ensemble_size: 10,
            bin_sampling: BinSampling::default(),
            baseline: stats(0.25, 0.05, 0.5),
            proposer: ProposerKind::default(),
            proposer_url: None,
            proposer_timeout_ms: 5_000,
            random: search_random_defaults(),
            scripted: Vec::new(),
            evaluator: EvaluatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// `bagging-1d`, `bagging-1d-infeasible` or `table`.
    pub preset: String,
    pub ensemble_size: usize,
    pub model: BaggingModel,
    /// Baseline position for the bagging presets.
    pub alpha_old: f64,
    pub lower_bound: f64,
    /// CSV with columns `x,E,var,rho`, for the `table` preset.
    pub table: Option<PathBuf>,
    /// Baseline position for the `table` preset; defaults to the largest `x`.
    pub x_old: Option<f64>,
    /// `options.seed` is replaced by the run seed.
    pub options: SurrogateOptions,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            preset: "bagging-1d".into(),
            ensemble_size: 10,
            model: BaggingModel::DEMO,
            alpha_old: 1.0,
            lower_bound: 1e-3,
            table: None,
            x_old: None,
            options: SurrogateOptions::default(),
        }
    }
}

pub const SURROGATE_PRESETS: [&str; 3] = ["bagging-1d", "bagging-1d-infeasible", "table"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateQualitySweepConfig {
    pub enabled: bool,
    pub runs: usize,
    pub budget: usize,
    pub bins: usize,
    pub baseline: ArchitectureStats,
    pub random: RandomProposerConfig,
}

impl Default for GateQualitySweepConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            runs: 10,
            budget: 200,
            bins: 4,
            baseline: stats(0.25, 0.05, 0.5),
            random: search_random_defaults(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateFidelityConfig {
    pub target: ArchitectureStats,
    /// Deployment ensemble size for the true ensemble error.
    pub ensemble_size: usize,
    pub label_model: LabelModel,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    /// Noisy-gate quality of searches run with simulated dual proxies at
    /// each batch size in `n_grid`.
    pub gate_quality: GateQualitySweepConfig,
}

impl Default for EstimateFidelityConfig {
    fn default() -> Self {
        Self {
            target: stats(0.25, 0.05, 0.2),
            ensemble_size: 10,
            label_model: LabelModel::default(),
            n_grid: vec![1_000, 10_000, 100_000],
            reps: 100,
            gate_quality: GateQualitySweepConfig::default(),
        }
    }
}

impl EstimateFidelityConfig {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let n = self.n_grid.iter().copied().min().unwrap_or(2);
        SimConfig::new(self.target, self.ensemble_size, n, seed).with_label_model(self.label_model)
    }
}

/// Parses a config file, choosing TOML or JSON by extension.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        "toml" => toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        other => Err(CliError::Config(format!(
            "{}: unsupported config extension `{other}` (use .toml or .json)",
            path.display()
        ))),
    }
}

pub fn read_table(path: &Path) -> Result<Vec<TableRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read table {}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<Result<Vec<TableRow>, _>>()
        .map_err(|e| CliError::Config(format!("table {}: {e}", path.display())))
}

fn ensemble(size: usize) -> Result<EnsembleSpec, CliError> {
    Ok(EnsembleSpec::new(size)?)
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl VerifyTheoryConfig {
    pub fn validate(&self, seed: u64) -> Result<(), CliError> {
        require(self.trials >= 1, || "verify_theory.trials must be at least 1".into())?;
        self.sim_config(seed).validate()?;
        for (i, pair) in self.gate.pairs.iter().enumerate() {
            for s in [pair.candidate, pair.baseline] {
                SimConfig::new(s, self.ensemble_size, self.gate.n_samples, seed)
                    .with_label_model(self.label_model)
                    .validate()
                    .map_err(|e| CliError::Config(format!("verify_theory.gate.pairs[{i}]: {e}")))?;
            }
        }
        require(self.gate.pairs.is_empty() || self.ensemble_size >= 2, || {
            "the gate experiment needs ensemble_size >= 2".into()
        })?;
        require(self.gate.replications >= 1, || "verify_theory.gate.replications must be at least 1".into())?;
        require((0.0..=1.0).contains(&self.gate.min_consistency), || {
            "verify_theory.gate.min_consistency must lie in [0, 1]".into()
        })
    }
}

impl OptimizeAlphaConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.model.check_admissible(ensemble(self.ensemble_size)?)?;
        require(self.sweep_points >= 1, || "optimize_alpha.sweep_points must be at least 1".into())?;
        for &a in &self.alpha_old {
            require(a > 0.0 && a <= 1.0, || format!("optimize_alpha.alpha_old {a} outside (0, 1]"))?;
        }
        for &m in &self.diminishing_sizes {
            ensemble(m)?;
        }
        Ok(())
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.settings(0)?.validate()?;
        self.baseline.validate()?;
        require(self.baseline.variance > 0.0, || "search.baseline.var must be positive".into())?;
        if self.proposer == ProposerKind::External {
            require(self.proposer_url.is_some(), || {
                "the external proposer needs search.proposer_url or --proposer-url".into()
            })?;
        }
        for s in &self.scripted {
            s.validate()?;
        }
        if let EvaluatorConfig::Simulated { n_samples, label_model } = self.evaluator {
            require(n_samples >= 2, || "search.evaluator.n_samples must be at least 2".into())?;
            label_model.validate()?;
        }
        Ok(())
    }

    pub fn settings(&self, seed: u64) -> Result<SearchSettings, CliError> {
        let mut s = SearchSettings::new(self.budget, self.bins, ensemble(self.ensemble_size)?, seed);
        s.bin_sampling = self.bin_sampling;
        Ok(s)
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(SURROGATE_PRESETS.contains(&self.preset.as_str()), || {
            format!(
                "unknown surrogate preset `{}` (known: {})",
                self.preset,
                SURROGATE_PRESETS.join(", ")
            )
        })?;
        ensemble(self.ensemble_size)?.gate_factor()?;
        self.options.validate()?;
        if self.preset == "table" {
            let path = self
                .table
                .as_ref()
                .ok_or_else(|| CliError::Config("the table preset needs surrogate.table".into()))?;
            read_table(path)?;
        } else {
            self.model.validate()?;
            require(self.alpha_old > 0.0 && self.alpha_old <= 1.0, || {
                format!("surrogate.alpha_old {} outside (0, 1]", self.alpha_old)
            })?;
            require(self.lower_bound > 0.0 && self.lower_bound < 1.0, || {
                "surrogate.lower_bound must lie in (0, 1)".into()
            })?;
        }
        Ok(())
    }
}

impl EstimateFidelityConfig {
    pub fn validate(&self, seed: u64) -> Result<(), CliError> {
        require(self.reps >= 2, || "estimate_fidelity.reps must be at least 2".into())?;
        require(!self.n_grid.is_empty(), || "estimate_fidelity.n_grid must not be empty".into())?;
        require(self.n_grid.iter().all(|n| *n >= 2), || "estimate_fidelity.n_grid entries must be at least 2".into())?;
        self.sim_config(seed).validate()?;
        if self.gate_quality.enabled {
            let q = &self.gate_quality;
            require(q.runs >= 1 && q.budget >= 1 && q.bins >= 1, || {
                "estimate_fidelity.gate_quality needs runs, budget and bins >= 1".into()
            })?;
            ensemble(self.ensemble_size)?.gate_factor()?;
            q.baseline.validate()?;
            require(q.baseline.variance > 0.0, || "gate_quality.baseline.var must be positive".into())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_both_formats() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&toml_text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[cost]\nn = 3").is_err());
        let cfg: RunConfig = toml::from_str("seed = 7\n[cost]\nn_trials = 3").unwrap();
        assert_eq!((cfg.seed, cfg.cost.n_trials, cfg.cost.ensemble_size), (7, 3, 100));
    }

    #[test]
    fn default_sections_validate() {
        let cfg = RunConfig::default();
        cfg.verify_theory.validate(cfg.seed).unwrap();
        cfg.optimize_alpha.validate().unwrap();
        cfg.cost.model().unwrap();
        cfg.search.validate().unwrap();
        cfg.surrogate.validate().unwrap();
        cfg.estimate_fidelity.validate(cfg.seed).unwrap();
    }

    #[test]
    fn invalid_sections_rejected() {
        let mut v = VerifyTheoryConfig::default();
        v.target.correlation = -0.2;
        assert!(v.validate(0).is_err());
        let s = SurrogateConfig {
            preset: "nope".into(),
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let e = SearchConfig {
            proposer: ProposerKind::External,
            ..Default::default()
        };
        assert!(e.validate().is_err());
    }
}

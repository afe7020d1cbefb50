//! Ensemble error laws for homogeneous ensembles, the monotonic acceptance
//! gate, and the tools built on them: a closed-form feature-bagging model, a
//! Monte-Carlo simulator of equicorrelated learners, dual-proxy estimation,
//! and an iterative architecture search.

pub mod bagging;
pub mod error;
pub mod estimator;
pub mod search;
pub mod seed;
pub mod simulator;
pub mod stats;

pub use bagging::{BaggingModel, CorrelationWarning, GainDecomposition};
pub use error::{Error, Result};
pub use estimator::{estimate_stats, DualProxySample, EstimatedStats};
pub use search::{CandidateDescriptor, SearchTrace};
pub use simulator::{LabelModel, PredictionMatrix, SimConfig};
pub use stats::{
    ensemble_error_homogeneous, gate_general, gate_simplified, monotonic_threshold,
    ArchitectureStats, CostModel, EnsembleSpec,
};

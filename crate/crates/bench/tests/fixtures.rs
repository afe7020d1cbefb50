use ensgate_core::bagging::BaggingModel;
use ensgate_core::search::surrogate::{BaggingSurrogate, SurrogateOptions};
use ensgate_core::simulator::SimConfig;
use ensgate_core::{ArchitectureStats, EnsembleSpec};

// The benchmarks unwrap these; keep them valid.
#[test]
fn benchmark_inputs_are_valid() {
    let ens = EnsembleSpec::new(10).unwrap();
    let stats = ArchitectureStats::new(0.25, 0.05, 0.2).unwrap();
    SimConfig::new(stats, 10, 10_000, 7).validate().unwrap();
    SimConfig::new(stats, 2, 10_000, 7).validate().unwrap();
    let s = BaggingSurrogate::new(BaggingModel::DEMO, ens, 1.0).unwrap();
    s.problem(1e-3).validate().unwrap();
    SurrogateOptions::default().validate().unwrap();
}

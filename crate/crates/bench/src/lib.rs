//! Criterion benchmarks for `ensgate-core`; see `benches/core.rs`.

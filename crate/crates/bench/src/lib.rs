//! Criterion benchmarks for the estimators; the code lives under `benches/`.

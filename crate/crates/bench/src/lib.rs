//! Criterion benchmarks for the engagement pipeline; see `benches/`.

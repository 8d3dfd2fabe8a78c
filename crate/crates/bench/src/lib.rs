//! Criterion benchmarks for cgolab live under `benches/`.

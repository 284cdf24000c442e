//! Criterion benchmarks for manet-core live under `benches/`.

//! Criterion benchmarks for dimple-core live under `benches/`.

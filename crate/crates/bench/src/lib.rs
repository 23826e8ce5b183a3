//! Criterion benchmarks for the conewalk kernels; see `benches/`.

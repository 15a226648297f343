//! Criterion benchmarks for the edgesync kernels live in `benches/`.

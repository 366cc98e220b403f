//! Criterion benchmarks for the paqft kernels live in `benches/`.

//! Criterion benchmarks for the hot paths in `icurisk`; see `benches/`.

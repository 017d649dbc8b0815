//! Criterion benchmarks for the `lsing` crate; see `benches/`.

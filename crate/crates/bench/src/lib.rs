//! Criterion benchmarks for the fuzzer hot paths; see `benches/`.

//! Criterion benchmarks for the HARQ hot paths; see `benches/pipeline.rs`.

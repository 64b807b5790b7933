//! Benchmarks live in `benches/`. This crate only exists to host them.

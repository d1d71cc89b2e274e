//! Benchmarks only; see `benches/solvers.rs`. Run with `cargo bench -p adapd-bench`.

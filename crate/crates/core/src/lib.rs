//! Decentralized primal-dual consensus optimization.

pub mod linalg;
pub mod rng;
pub mod topology;
pub mod problems;
pub mod solvers;
pub mod diagnostics;
pub mod harness;

//! Benchmark, fuzz, and visualization harness for the `cmaes` crate.

pub mod bench;
pub mod experiments;
pub mod functions;
pub mod fuzz;
pub mod plot;
pub mod runner;

//! Benchmark harness for the condgrad toolkit: experiment configuration,
//! metric CSV emission, the desk-scale completion replication, stochastic
//! runners, an oracle micro-benchmark, and the bound-verification suites.

pub mod completion;
pub mod config;
pub mod lmobench;
pub mod metrics;
pub mod stochastic;
pub mod verify;

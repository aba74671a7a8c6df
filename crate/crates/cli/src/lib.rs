//! Pipeline plumbing behind the `shapeedit` binary.

pub mod bench;
pub mod config;
pub mod pipeline;

pub use config::{BenchmarkConfig, MetricConfig, RunConfig, Variant};

//! Batch evaluation, scripted policies, the feasible-coverage oracle and
//! throughput benchmarking.

mod batch;
mod bench;
mod oracle;
mod policy;

pub use batch::{
    episode_coverage, make_policy, percentile, run_batch, run_episode, summarize, write_curves_csv,
    write_metrics_csv, BatchConfig, BatchResult, CoverageBin, CoverageReport, EpisodeSummary, MetricsRow,
};
pub use bench::{bench, BenchReport, Throughput};
pub use oracle::{feasible_coverage, FeasibleSet, OracleParams};
pub use policy::{OrbitParams, OrbitPolicy, Policy, PolicyKind, RandomPolicy};

//! Scoring segmenters against ground truth and measuring their latency.

mod bench;
mod harness;
pub mod metrics;

pub use bench::{
    bench_fn, bench_latency, latency_stats, BenchReport, LatencyStats, MachineInfo, StageTiming,
};
pub use harness::{render_table, run_eval, segment, EvalConfig, EvalReport, Method, SampleScore};
pub use metrics::{binarize, dice, iou};

//! Evaluation: scoring predicted queries against ground truth and
//! running seeded benchmark evaluations over question datasets.

mod bench;
mod cache;
mod dataset;
mod metric;

pub use bench::{
    run_benchmark, summarize, BenchError, BenchOptions, BenchReport, Counters, KgSummary,
    RunOutcome, SampleScore, DEFAULT_SAMPLE_COUNT, LAYOUT_VERSION,
};
pub use cache::GtCache;
pub use dataset::{load_dataset, BenchmarkSample, DatasetError};
pub use metric::{
    assignment_f1, exact_f1, row_match, score_results, EvalScore, ScorePath, ASSIGNMENT_ROW_CAP,
};

//! Metrics, latency measurement and the experiment drivers behind the
//! grid-vs-regression comparison, the data-fraction sweep and the
//! circle-trajectory evaluation, plus their CSV reports.

mod experiments;
mod latency;
mod metrics;
mod report;

use thiserror::Error;

pub use experiments::{
    circle_eval, data_fraction_sweep, evaluate, grid_comparison, knn_latency, model_latency,
    nested_subsets, train_task, CircleResult, EvalReport, FeatureTable, GridRow, SweepRow,
    SWEEP_FRACTIONS,
};
pub use latency::{latency_benchmark, LatencyStats, DEFAULT_REPS, DEFAULT_WARMUP};
pub use metrics::{
    mean_std, position_errors, quantization_floor, quantization_floor_mc, rmse, ConfusionMatrix,
};
pub use report::{
    write_circle_pairs, write_confusion, write_grid_comparison, write_history, write_latency,
    write_sweep, LatencyRow,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions for {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("class {class} outside 0..{n}")]
    ClassOutOfRange { class: usize, n: usize },
    #[error("fraction {fraction} leaves class {class} without training samples")]
    TooFewSamples { fraction: f64, class: usize },
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("cannot write report: {0}")]
    Report(String),
    #[error("{0}")]
    Failed(String),
}

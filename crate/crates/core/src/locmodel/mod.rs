//! Localization heads: grid classification with centre-of-mass decoding,
//! coordinate regression, keypad classification and a kNN baseline.

mod grid;
mod keypad;
mod knn;
mod task;

use thiserror::Error;

pub use grid::{
    build_grid_classifier, build_regressor, center_of_mass, decode_classification, zone_of,
    GridSpec, ZoneIndex,
};
pub use keypad::{
    build_keypad_classifier, keypad_label, Key, KeypadLayout, BACKGROUND_CLASS, KEYPAD_CLASSES,
    KEY_LABELS,
};
pub use knn::{knn_classify, KnnReference};
pub use task::{
    GridTask, KeypadTask, LocalizationTask, Prediction, RegressionTask, TaskContext, TaskRegistry,
};

#[derive(Debug, Error, PartialEq)]
pub enum LocError {
    #[error("grid resolution {0} outside [2, 10]")]
    BadResolution(usize),
    #[error("invalid plate dimensions {0} x {1} cm")]
    BadPlate(f64, f64),
    #[error("zone ({i}, {j}) outside a {n}x{n} grid")]
    BadZone { i: usize, j: usize, n: usize },
    #[error("point ({x}, {y}) lies outside the plate")]
    OutsidePlate { x: f64, y: f64 },
    #[error("cannot decode: {0}")]
    BadScores(String),
    #[error("keypad layout: {0}")]
    BadLayout(String),
    #[error("k = {k} exceeds the {n} reference samples")]
    KTooLarge { k: usize, n: usize },
    #[error("kNN: {0}")]
    BadReference(String),
    #[error("unknown task '{0}' (expected grid:N, regression or keypad)")]
    UnknownTask(String),
    #[error("task '{task}' does not support the {domain} domain")]
    UnsupportedDomain { task: String, domain: String },
}

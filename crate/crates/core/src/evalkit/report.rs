use std::path::Path;

use super::experiments::{CircleResult, GridRow, SweepRow};
use super::metrics::ConfusionMatrix;
use super::EvalError;
use crate::neural::EpochStats;
use crate::store::write_atomic;

/// One labelled latency measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub label: String,
    pub reps: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), EvalError> {
    let report = |e: &dyn std::fmt::Display| EvalError::Report(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| report(&e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| report(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| report(&e))?;
    write_atomic(path, &bytes).map_err(|e| report(&e))
}

pub fn write_grid_comparison(path: &Path, rows: &[GridRow]) -> Result<(), EvalError> {
    write_csv(
        path,
        &[
            "config",
            "domain",
            "rmse_cm",
            "mean_error_cm",
            "stddev_error_cm",
            "epochs",
            "error",
        ],
        rows.iter().map(|r| {
            vec![
                r.config.clone(),
                r.domain.to_string(),
                opt(r.rmse_cm),
                opt(r.mean_error_cm),
                opt(r.stddev_error_cm),
                r.epochs.map(|e| e.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), EvalError> {
    write_csv(
        path,
        &[
            "method",
            "fraction",
            "train_size",
            "accuracy",
            "median_ms",
            "p95_ms",
        ],
        rows.iter().map(|r| {
            vec![
                r.method.clone(),
                r.fraction.to_string(),
                r.train_size.to_string(),
                r.accuracy.to_string(),
                r.median_ms.to_string(),
                r.p95_ms.to_string(),
            ]
        }),
    )
}

pub fn write_latency(path: &Path, rows: &[LatencyRow]) -> Result<(), EvalError> {
    write_csv(
        path,
        &["label", "reps", "median_ms", "p95_ms"],
        rows.iter().map(|r| {
            vec![
                r.label.clone(),
                r.reps.to_string(),
                r.median_ms.to_string(),
                r.p95_ms.to_string(),
            ]
        }),
    )
}

/// Paired true and predicted positions for every model and circle point.
pub fn write_circle_pairs(path: &Path, results: &[CircleResult]) -> Result<(), EvalError> {
    let mut rows = Vec::new();
    for r in results {
        for (k, (p, t)) in r
            .report
            .predictions
            .iter()
            .zip(&r.report.targets)
            .enumerate()
        {
            let pred = p.position().ok_or_else(|| {
                EvalError::Report(format!("model {} does not predict positions", r.name))
            })?;
            rows.push(vec![
                r.name.clone(),
                k.to_string(),
                t[0].to_string(),
                t[1].to_string(),
                pred[0].to_string(),
                pred[1].to_string(),
                (pred[0] - t[0]).hypot(pred[1] - t[1]).to_string(),
            ]);
        }
    }
    write_csv(
        path,
        &[
            "model", "index", "true_x", "true_y", "pred_x", "pred_y", "error_cm",
        ],
        rows,
    )
}

/// Rows are predictions, columns targets; `labels` names the classes.
pub fn write_confusion(
    path: &Path,
    m: &ConfusionMatrix,
    labels: &[String],
) -> Result<(), EvalError> {
    if labels.len() != m.classes() {
        return Err(EvalError::Report(format!(
            "{} labels for {} classes",
            labels.len(),
            m.classes()
        )));
    }
    let mut header = vec!["predicted\\target"];
    header.extend(labels.iter().map(String::as_str));
    let rows = (0..m.classes()).map(|p| {
        let mut row = vec![labels[p].clone()];
        row.extend((0..m.classes()).map(|t| m.get(p, t).to_string()));
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<(), EvalError> {
    write_csv(
        path,
        &["epoch", "train_loss", "val_loss"],
        history.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
            ]
        }),
    )
}

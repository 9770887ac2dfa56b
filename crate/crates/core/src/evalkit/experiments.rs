use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::latency::{latency_benchmark, LatencyStats};
use super::metrics::{mean_std, position_errors, rmse, ConfusionMatrix};
use super::EvalError;
use crate::dsp::{extract_features, Domain};
use crate::locmodel::{
    knn_classify, GridSpec, GridTask, KnnReference, LocalizationTask, Prediction, RegressionTask,
    TaskContext,
};
use crate::neural::{train_on_split, DataSplit, ModelCheckpoint, TrainConfig, TrainOutcome};
use crate::rng::{stream_rng, Stream};
use crate::sigsim::{ChirpSpec, RecordSet};
use crate::{Point, Result};

pub const SWEEP_FRACTIONS: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];

/// Feature matrix (one row per record) with the true touch positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub domain: Domain,
    pub features: Array2<f64>,
    pub positions: Vec<Point>,
}

impl FeatureTable {
    pub fn extract(records: &[RecordSet], domain: Domain, chirp: &ChirpSpec) -> Result<Self> {
        let mut features = Array2::zeros((records.len(), domain.feature_len()));
        for (mut row, r) in features.rows_mut().into_iter().zip(records) {
            row.assign(&ndarray::ArrayView1::from(
                extract_features(r, domain, chirp)?.values(),
            ));
        }
        Ok(Self {
            domain,
            features,
            positions: records.iter().map(|r| r.event.position()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn rows(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| self.features.row(i).to_vec())
            .collect()
    }
}

/// Metrics for one model on one set of samples. Position metrics are
/// present for tasks that decode to positions, class metrics for classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub rmse_cm: Option<f64>,
    pub mean_error_cm: Option<f64>,
    pub stddev_error_cm: Option<f64>,
    pub per_sample_errors: Vec<f64>,
    pub accuracy: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
    pub latency: Option<LatencyStats>,
    pub predictions: Vec<Prediction>,
    pub targets: Vec<Point>,
}

/// Builds the task's network and trains it on `split`, tagging the checkpoint
/// with the task and domain.
pub fn train_task(
    task: &dyn LocalizationTask,
    table: &FeatureTable,
    split: &DataSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let spec = task.net_spec(table.domain)?;
    let targets = task.targets(&table.positions)?;
    let mut out = train_on_split(spec, table.features.view(), &targets, split, cfg)?;
    let tags = &mut out.checkpoint.train_meta.tags;
    tags.insert("task".into(), task.name());
    tags.insert("domain".into(), table.domain.as_str().into());
    Ok(out)
}

pub fn evaluate(
    task: &dyn LocalizationTask,
    model: &ModelCheckpoint,
    table: &FeatureTable,
    indices: &[usize],
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let outputs = model.infer(table.features.select(Axis(0), indices).view())?;
    let predictions = outputs
        .rows()
        .into_iter()
        .map(|row| task.decode(&row.to_vec()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let targets: Vec<Point> = indices.iter().map(|&i| table.positions[i]).collect();
    let mut report = EvalReport {
        samples: indices.len(),
        rmse_cm: None,
        mean_error_cm: None,
        stddev_error_cm: None,
        per_sample_errors: Vec::new(),
        accuracy: None,
        confusion: None,
        latency: None,
        predictions,
        targets,
    };
    let decoded: Option<Vec<Point>> = report
        .predictions
        .iter()
        .map(Prediction::position)
        .collect();
    if let Some(decoded) = decoded {
        let errors = position_errors(&decoded, &report.targets)?;
        let (mean, sd) = mean_std(&errors);
        report.rmse_cm = Some(rmse(&decoded, &report.targets)?);
        report.mean_error_cm = Some(mean);
        report.stddev_error_cm = Some(sd);
        report.per_sample_errors = errors;
    }
    if let Some(n) = task.classes() {
        let mut m = ConfusionMatrix::new(n);
        for (p, t) in report.predictions.iter().zip(&report.targets) {
            let truth = task.true_class(*t)?.expect("classifier has classes");
            m.add(p.class().expect("classifier predicts classes"), truth)?;
        }
        report.accuracy = Some(m.accuracy());
        report.confusion = Some(m);
    }
    Ok(report)
}

/// Single-sample inference latency, cycling through `indices`.
pub fn model_latency(
    model: &ModelCheckpoint,
    table: &FeatureTable,
    indices: &[usize],
    warmup: usize,
    reps: usize,
) -> LatencyStats {
    let rows = table.rows(indices);
    latency_benchmark(warmup, reps, |i| model.infer_one(&rows[i % rows.len()]))
}

pub fn knn_latency(
    reference: &KnnReference,
    table: &FeatureTable,
    indices: &[usize],
    warmup: usize,
    reps: usize,
) -> LatencyStats {
    let rows = table.rows(indices);
    latency_benchmark(warmup, reps, |i| {
        knn_classify(&rows[i % rows.len()], reference, 1)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    /// `C-N` or `R`.
    pub config: String,
    pub domain: Domain,
    pub rmse_cm: Option<f64>,
    pub mean_error_cm: Option<f64>,
    pub stddev_error_cm: Option<f64>,
    pub epochs: Option<usize>,
    /// Set when training or evaluation of this cell failed.
    pub error: Option<String>,
}

/// Trains C-N for every resolution and the regressor in each domain on a
/// shared split and reports test-set errors. A failing cell is recorded in
/// its row and the sweep continues.
pub fn grid_comparison(
    tables: &[FeatureTable],
    split: &DataSplit,
    cfg: &TrainConfig,
    ctx: &TaskContext,
    resolutions: &[usize],
    on_row: &mut dyn FnMut(&GridRow),
) -> Vec<GridRow> {
    let mut rows = Vec::new();
    for table in tables {
        let mut configs: Vec<(String, Box<dyn LocalizationTask>)> = Vec::new();
        for &n in resolutions {
            match GridSpec::new(n, ctx.plate_width_cm, ctx.plate_height_cm) {
                Ok(grid) => configs.push((format!("C-{n}"), Box::new(GridTask { grid }))),
                Err(e) => {
                    let row = failed_row(format!("C-{n}"), table.domain, e.to_string());
                    on_row(&row);
                    rows.push(row);
                }
            }
        }
        configs.push(("R".into(), Box::new(RegressionTask)));
        for (config, task) in configs {
            let result = train_task(task.as_ref(), table, split, cfg).and_then(|out| {
                Ok((
                    evaluate(task.as_ref(), &out.checkpoint, table, &split.test)?,
                    out.history.len(),
                ))
            });
            let row = match result {
                Ok((r, epochs)) => GridRow {
                    config,
                    domain: table.domain,
                    rmse_cm: r.rmse_cm,
                    mean_error_cm: r.mean_error_cm,
                    stddev_error_cm: r.stddev_error_cm,
                    epochs: Some(epochs),
                    error: None,
                },
                Err(e) => failed_row(config, table.domain, e.to_string()),
            };
            on_row(&row);
            rows.push(row);
        }
    }
    rows
}

fn failed_row(config: String, domain: Domain, error: String) -> GridRow {
    GridRow {
        config,
        domain,
        rmse_cm: None,
        mean_error_cm: None,
        stddev_error_cm: None,
        epochs: None,
        error: Some(error),
    }
}

/// Seeded permutation of the training split; the subset for fraction `f`
/// is its first `floor(f * len)` entries, so smaller subsets are nested in
/// larger ones.
pub fn nested_subsets(
    train: &[usize],
    fractions: &[f64],
    seed: u64,
) -> std::result::Result<Vec<Vec<usize>>, EvalError> {
    let mut order = train.to_vec();
    order.shuffle(&mut stream_rng(seed, 0, Stream::Subsample));
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(EvalError::BadFraction(f));
            }
            Ok(order[..(f * order.len() as f64).floor() as usize].to_vec())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `dnn` or `knn`.
    pub method: String,
    pub fraction: f64,
    pub train_size: usize,
    pub accuracy: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// DNN and 1-NN accuracy and single-sample latency on the test split as the
/// training split is subsampled. Validation and test sets are untouched.
pub fn data_fraction_sweep(
    task: &dyn LocalizationTask,
    table: &FeatureTable,
    split: &DataSplit,
    cfg: &TrainConfig,
    fractions: &[f64],
    reps: usize,
    on_row: &mut dyn FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let classes = task
        .classes()
        .ok_or_else(|| EvalError::Failed(format!("task '{}' is not a classifier", task.name())))?;
    let labels: Vec<usize> = table
        .positions
        .iter()
        .map(|&t| Ok(task.true_class(t)?.expect("classifier")))
        .collect::<Result<_>>()?;
    let test_labels: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let mut rows = Vec::new();
    for (subset, &fraction) in nested_subsets(&split.train, fractions, cfg.seed)?
        .into_iter()
        .zip(fractions)
    {
        if let Some(class) = (0..classes).find(|c| !subset.iter().any(|&i| labels[i] == *c)) {
            return Err(EvalError::TooFewSamples { fraction, class }.into());
        }
        let sub = DataSplit {
            train: subset.clone(),
            val: split.val.clone(),
            test: split.test.clone(),
        };
        let out = train_task(task, table, &sub, cfg)?;
        let report = evaluate(task, &out.checkpoint, table, &split.test)?;
        let lat = model_latency(
            &out.checkpoint,
            table,
            &split.test,
            super::DEFAULT_WARMUP,
            reps,
        );
        let dnn = SweepRow {
            method: "dnn".into(),
            fraction,
            train_size: subset.len(),
            accuracy: report.accuracy.expect("classifier"),
            median_ms: lat.median_ms,
            p95_ms: lat.p95_ms,
        };
        on_row(&dnn);
        rows.push(dnn);

        let reference = KnnReference::new(
            table.features.select(Axis(0), &subset),
            subset.iter().map(|&i| labels[i]).collect(),
        )?;
        let predicted: Vec<usize> = split
            .test
            .iter()
            .map(|&i| knn_classify(&table.features.row(i).to_vec(), &reference, 1))
            .collect::<std::result::Result<_, _>>()?;
        let confusion = ConfusionMatrix::from_pairs(&predicted, &test_labels, classes)?;
        let lat = knn_latency(&reference, table, &split.test, super::DEFAULT_WARMUP, reps);
        let knn = SweepRow {
            method: "knn".into(),
            fraction,
            train_size: subset.len(),
            accuracy: confusion.accuracy(),
            median_ms: lat.median_ms,
            p95_ms: lat.p95_ms,
        };
        on_row(&knn);
        rows.push(knn);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleResult {
    pub name: String,
    pub report: EvalReport,
}

/// Evaluates each named model on every sample of a circle-trajectory table.
pub fn circle_eval(
    models: &[(String, &dyn LocalizationTask, &ModelCheckpoint)],
    circle: &FeatureTable,
) -> Result<Vec<CircleResult>> {
    let all: Vec<usize> = (0..circle.len()).collect();
    models
        .iter()
        .map(|(name, task, model)| {
            Ok(CircleResult {
                name: name.clone(),
                report: evaluate(*task, model, circle, &all)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locmodel::TaskRegistry;
    use crate::neural::{Head, NetSpec};
    use crate::sigsim::{PlateConfig, Simulator};

    fn small_table(n: usize) -> FeatureTable {
        let sim = Simulator::new(PlateConfig::default(), ChirpSpec::default(), 4).unwrap();
        let recs = sim.gen_dataset(n).unwrap();
        FeatureTable::extract(&recs, Domain::Frequency, &ChirpSpec::default()).unwrap()
    }

    #[test]
    fn nested_subset_sizes() {
        let train: Vec<usize> = (0..4482).collect();
        let subs = nested_subsets(&train, &SWEEP_FRACTIONS, 1).unwrap();
        let sizes: Vec<usize> = subs.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4482, 3585, 2689, 1792, 896]);
        for w in subs.windows(2) {
            assert_eq!(&w[0][..w[1].len()], &w[1][..]);
        }
        assert_eq!(
            nested_subsets(&train, &[0.0], 1),
            Err(EvalError::BadFraction(0.0))
        );
    }

    #[test]
    fn evaluate_regression_and_grid() {
        let table = small_table(40);
        let idx: Vec<usize> = (0..40).collect();
        let ctx = TaskContext::default();
        let reg = TaskRegistry::default();
        let spec = NetSpec::new(392, vec![8], 2, Head::LinearRegressor);
        let m = ModelCheckpoint::initialize(spec, &mut stream_rng(1, 0, Stream::Init)).unwrap();
        let r = evaluate(
            reg.create("regression", &ctx).unwrap().as_ref(),
            &m,
            &table,
            &idx,
        )
        .unwrap();
        assert_eq!(r.samples, 40);
        assert!(r.rmse_cm.unwrap() >= r.mean_error_cm.unwrap());
        assert!(r.accuracy.is_none());

        let grid = reg.create("grid:10", &ctx).unwrap();
        let spec = NetSpec::new(392, vec![8], 100, Head::SoftmaxClassifier);
        let m = ModelCheckpoint::initialize(spec, &mut stream_rng(1, 0, Stream::Init)).unwrap();
        let r = evaluate(grid.as_ref(), &m, &table, &idx).unwrap();
        assert_eq!(r.confusion.as_ref().unwrap().total(), 40);
        for p in &r.predictions {
            let [x, y] = p.position().unwrap();
            assert_eq!((x - 1.0) % 2.0, 0.0);
            assert_eq!((y - 1.0) % 2.0, 0.0);
        }
        assert!(evaluate(grid.as_ref(), &m, &table, &[]).is_err());
    }

    #[test]
    fn grid_comparison_records_failures_and_continues() {
        let table = small_table(30);
        let split = DataSplit::seeded(30, DataSplit::DEFAULT_FRACTIONS, 1);
        let cfg = TrainConfig {
            max_epochs: 2,
            patience: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut seen = 0;
        let rows = grid_comparison(
            &[table],
            &split,
            &cfg,
            &TaskContext::default(),
            &[2, 11],
            &mut |_| seen += 1,
        );
        assert_eq!(rows.len(), 3);
        assert_eq!(seen, 3);
        assert!(rows.iter().any(|r| r.config == "C-11" && r.error.is_some()));
        assert!(rows
            .iter()
            .filter(|r| r.config != "C-11")
            .all(|r| r.rmse_cm.is_some()));
    }
}

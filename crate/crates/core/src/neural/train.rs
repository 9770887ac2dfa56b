use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use thiserror::Error;

use super::adam::{Adam, AdamConfig};
use super::forward::Mode;
use super::loss::{loss, loss_and_grad, Targets};
use super::model::{Head, ModelCheckpoint, NetSpec};
use super::NetError;
use crate::rng::{stream_rng, Stream};

pub const MIN_DATASET: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("dataset of {0} samples is too small (need at least {MIN_DATASET})")]
    TooSmall(usize),
    #[error("targets do not fit the network head: {0}")]
    Targets(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch size {} must be at least 2 for batch statistics",
                self.batch_size
            ));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be positive".into());
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} = {b} outside (0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0 && self.bn_eps > 0.0) {
            return bad("epsilons must be positive".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad(format!(
                "batchnorm momentum {} outside (0, 1]",
                self.bn_momentum
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Sample indices for the train / validation / test partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.7, 0.2, 0.1);

    /// Seeded shuffle of `0..n`, then train and validation take
    /// `floor(fraction * n)` samples each and test takes the rest.
    pub fn seeded(n: usize, fractions: (f64, f64, f64), seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(seed, 0, Stream::Split));
        let n_train = (fractions.0 * n as f64).floor() as usize;
        let n_val = ((fractions.1 * n as f64).floor() as usize).min(n - n_train);
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        Self {
            train: order,
            val,
            test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochStats>,
    pub split: DataSplit,
    pub best_epoch: usize,
}

fn check_targets(spec: &NetSpec, n: usize, targets: &Targets) -> Result<(), TrainError> {
    if targets.len() != n {
        return Err(TrainError::Targets(format!(
            "{} targets for {} samples",
            targets.len(),
            n
        )));
    }
    match (spec.head, targets) {
        (Head::SoftmaxClassifier, Targets::Classes(c)) => {
            if let Some(bad) = c.iter().find(|&&c| c >= spec.output_dim) {
                return Err(TrainError::Targets(format!(
                    "class {bad} >= {} outputs",
                    spec.output_dim
                )));
            }
        }
        (Head::LinearRegressor, Targets::Values(v)) => {
            if v.ncols() != spec.output_dim {
                return Err(TrainError::Targets(format!(
                    "{} target columns for {} outputs",
                    v.ncols(),
                    spec.output_dim
                )));
            }
        }
        (Head::SoftmaxClassifier, _) => {
            return Err(TrainError::Targets("classifier needs class labels".into()))
        }
        (Head::LinearRegressor, _) => {
            return Err(TrainError::Targets(
                "regressor needs real-valued targets".into(),
            ))
        }
    }
    Ok(())
}

/// Seeded 70/20/10-style split followed by [`train_on_split`].
pub fn train(
    spec: NetSpec,
    features: ArrayView2<f64>,
    targets: &Targets,
    fractions: (f64, f64, f64),
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if features.nrows() < MIN_DATASET {
        return Err(TrainError::TooSmall(features.nrows()));
    }
    let split = DataSplit::seeded(features.nrows(), fractions, cfg.seed);
    train_on_split(spec, features, targets, &split, cfg)
}

pub fn train_on_split(
    spec: NetSpec,
    features: ArrayView2<f64>,
    targets: &Targets,
    split: &DataSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_on_split_observed(spec, features, targets, split, cfg, &mut |_| {})
}

/// Mini-batch Adam with best-validation-epoch selection and patience-based
/// early stopping. `on_epoch` sees every epoch's losses as they happen.
pub fn train_on_split_observed(
    mut spec: NetSpec,
    features: ArrayView2<f64>,
    targets: &Targets,
    split: &DataSplit,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    spec.bn_eps = cfg.bn_eps;
    spec.validate()?;
    if features.ncols() != spec.input_dim {
        return Err(NetError::DimensionMismatch {
            context: "training features".into(),
            expected: spec.input_dim,
            found: features.ncols(),
        }
        .into());
    }
    check_targets(&spec, features.nrows(), targets)?;
    if split.train.len() < 2 {
        return Err(TrainError::EmptySplit("training"));
    }
    if split.val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }

    let mut model = ModelCheckpoint::initialize(spec, &mut stream_rng(cfg.seed, 0, Stream::Init))?;
    let mut adam = Adam::new(&mut model, cfg.adam());
    let mut rng = stream_rng(cfg.seed, 0, Stream::Train);
    let val_x = features.select(Axis(0), &split.val);
    let val_t = targets.select(&split.val);
    let mut order = split.train.clone();
    let mut history = Vec::new();
    let mut best: Option<(ModelCheckpoint, EpochStats)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            // A single-sample batch has no usable batch variance.
            if idx.len() < 2 {
                continue;
            }
            let xb = features.select(Axis(0), idx);
            let tb = targets.select(idx);
            let pass = model
                .forward(xb.view(), Mode::Train, &mut rng)
                .map_err(|e| TrainError::Diverged {
                    epoch,
                    detail: e.to_string(),
                })?;
            let (batch_loss, d_logits) = loss_and_grad(pass.logits.view(), &tb)?;
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!("batch loss {batch_loss}"),
                });
            }
            let cache = pass.cache.expect("train mode caches activations");
            let grads = model.backward(&cache, d_logits.view())?;
            model.update_running_stats(&cache, cfg.bn_momentum);
            adam.step(&mut model, &grads);
            sum += batch_loss;
            batches += 1;
        }
        let val_logits = model
            .infer_logits(val_x.view())
            .map_err(|e| TrainError::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
        let val_loss = loss(val_logits.view(), &val_t)?;
        let stats = EpochStats {
            epoch,
            train_loss: sum / batches.max(1) as f64,
            val_loss,
        };
        if !stats.train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                detail: format!("train {} / val {}", stats.train_loss, val_loss),
            });
        }
        on_epoch(&stats);
        history.push(stats);
        if best.as_ref().is_none_or(|(_, b)| val_loss < b.val_loss) {
            best = Some((model.clone(), stats));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (mut checkpoint, best_stats) = best.expect("at least one epoch ran");
    checkpoint.quantize_to_f32();
    checkpoint.train_meta.seed = cfg.seed;
    checkpoint.train_meta.epochs = history.len() as u32;
    checkpoint.train_meta.best_epoch = best_stats.epoch as u32;
    checkpoint.train_meta.final_train_loss = best_stats.train_loss;
    checkpoint.train_meta.final_val_loss = best_stats.val_loss;
    Ok(TrainOutcome {
        checkpoint,
        history,
        split: split.clone(),
        best_epoch: best_stats.epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn toy_two_class(n: usize) -> (Array2<f64>, Targets) {
        let mut rng = stream_rng(5, 0, Stream::MonteCarlo);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let centre = if class == 0 { -2.0 } else { 2.0 };
            x[[i, 0]] = centre + rng.random_range(-1.0..1.0);
            x[[i, 1]] = rng.random_range(-1.0..1.0);
            y.push(class);
        }
        (x, Targets::Classes(y))
    }

    #[test]
    fn split_fractions_and_disjointness() {
        let s = DataSplit::seeded(6404, DataSplit::DEFAULT_FRACTIONS, 1);
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len()),
            (4482, 1280, 642)
        );
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..6404).collect::<Vec<_>>());
        assert_eq!(s, DataSplit::seeded(6404, DataSplit::DEFAULT_FRACTIONS, 1));
        assert_ne!(s, DataSplit::seeded(6404, DataSplit::DEFAULT_FRACTIONS, 2));
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (x, t) = toy_two_class(100);
        let spec = NetSpec::new(2, vec![8], 2, Head::SoftmaxClassifier);
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 50,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train(spec, x.view(), &t, DataSplit::DEFAULT_FRACTIONS, &cfg).unwrap();
        assert!(out.history.len() <= 50);
        let train_x = x.select(Axis(0), &out.split.train);
        let probs = out.checkpoint.infer(train_x.view()).unwrap();
        let Targets::Classes(labels) = t.select(&out.split.train) else {
            unreachable!()
        };
        let correct = probs
            .rows()
            .into_iter()
            .zip(&labels)
            .filter(|(row, &c)| (row[1] > row[0]) == (c == 1))
            .count();
        assert_eq!(correct, labels.len());
    }

    #[test]
    fn deterministic_and_best_epoch_selected() {
        let (x, t) = toy_two_class(60);
        let spec = NetSpec::new(2, vec![6, 4], 2, Head::SoftmaxClassifier);
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 5,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let a = train(
            spec.clone(),
            x.view(),
            &t,
            DataSplit::DEFAULT_FRACTIONS,
            &cfg,
        )
        .unwrap();
        let b = train(spec, x.view(), &t, DataSplit::DEFAULT_FRACTIONS, &cfg).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.history, b.history);
        let min = a
            .history
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.history[a.best_epoch - 1].val_loss, min);
        assert!(min <= a.history[0].val_loss);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, t) = toy_two_class(20);
        let spec = NetSpec::new(2, vec![4], 2, Head::SoftmaxClassifier);
        let cfg = TrainConfig::default();
        assert_eq!(
            train(
                spec.clone(),
                x.slice(ndarray::s![..5, ..]),
                &t.select(&[0, 1, 2, 3, 4]),
                DataSplit::DEFAULT_FRACTIONS,
                &cfg
            )
            .unwrap_err(),
            TrainError::TooSmall(5)
        );
        let reg = NetSpec::new(2, vec![4], 2, Head::LinearRegressor);
        assert!(matches!(
            train(reg, x.view(), &t, DataSplit::DEFAULT_FRACTIONS, &cfg),
            Err(TrainError::Targets(_))
        ));
        let bad_cfg = TrainConfig {
            adam_beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(spec, x.view(), &t, DataSplit::DEFAULT_FRACTIONS, &bad_cfg),
            Err(TrainError::InvalidConfig(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, _) = toy_two_class(40);
        let y = Array2::from_elem((40, 1), 1e200);
        let spec = NetSpec::new(2, vec![4], 1, Head::LinearRegressor);
        let err = train(
            spec,
            x.view(),
            &Targets::Values(y),
            DataSplit::DEFAULT_FRACTIONS,
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, TrainError::Diverged { .. } | TrainError::Net(_)),
            "{err:?}"
        );
    }
}

use rand::Rng;

use super::EvalError;
use crate::locmodel::{center_of_mass, zone_of, GridSpec};
use crate::rng::{stream_rng, Stream};
use crate::Point;

/// Euclidean distance between each prediction and its target.
pub fn position_errors(predictions: &[Point], targets: &[Point]) -> Result<Vec<f64>, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
        .collect())
}

/// Root mean squared Euclidean error in cm.
pub fn rmse(predictions: &[Point], targets: &[Point]) -> Result<f64, EvalError> {
    let e = position_errors(predictions, targets)?;
    Ok((e.iter().map(|d| d * d).sum::<f64>() / e.len() as f64).sqrt())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Counts indexed by (predicted, true) class, both 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_pairs(predicted: &[usize], truth: &[usize], n: usize) -> Result<Self, EvalError> {
        if predicted.len() != truth.len() {
            return Err(EvalError::LengthMismatch {
                predictions: predicted.len(),
                targets: truth.len(),
            });
        }
        let mut m = Self::new(n);
        for (&p, &t) in predicted.iter().zip(truth) {
            m.add(p, t)?;
        }
        Ok(m)
    }

    /// Builds a matrix from rows of counts, row = predicted class.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, EvalError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(EvalError::ClassOutOfRange { class: n, n });
        }
        Ok(Self {
            n,
            counts: rows.concat(),
        })
    }

    pub fn add(&mut self, predicted: usize, truth: usize) -> Result<(), EvalError> {
        for c in [predicted, truth] {
            if c >= self.n {
                return Err(EvalError::ClassOutOfRange {
                    class: c,
                    n: self.n,
                });
            }
        }
        self.counts[predicted * self.n + truth] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted * self.n + truth]
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Samples whose true class is `truth`.
    pub fn column_sum(&self, truth: usize) -> u64 {
        (0..self.n).map(|p| self.get(p, truth)).sum()
    }

    /// Accuracy over samples whose true class is in `classes`.
    pub fn accuracy_over(&self, classes: impl IntoIterator<Item = usize> + Clone) -> f64 {
        let correct: u64 = classes.clone().into_iter().map(|c| self.get(c, c)).sum();
        let total: u64 = classes.into_iter().map(|c| self.column_sum(c)).sum();
        correct as f64 / total as f64
    }

    /// Off-diagonal counts where both prediction and truth lie in `classes`.
    pub fn confusions_within(&self, classes: impl IntoIterator<Item = usize> + Clone) -> u64 {
        let set: Vec<usize> = classes.into_iter().collect();
        set.iter()
            .flat_map(|&p| set.iter().filter(move |&&t| t != p).map(move |&t| (p, t)))
            .map(|(p, t)| self.get(p, t))
            .sum()
    }
}

/// Closed-form RMSE of a perfect classifier decoded to zone centres for
/// uniformly distributed touches on a `side x side` plate: (side / n) / sqrt(6).
pub fn quantization_floor(n: usize, side_cm: f64) -> f64 {
    side_cm / n as f64 / 6f64.sqrt()
}

/// Monte-Carlo estimate of the same quantity.
pub fn quantization_floor_mc(grid: &GridSpec, samples: usize, seed: u64) -> Result<f64, EvalError> {
    let mut rng = stream_rng(seed, grid.n as u64, Stream::MonteCarlo);
    let mut targets = Vec::with_capacity(samples);
    let mut decoded = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = [
            rng.random_range(0.0..grid.plate_width_cm),
            rng.random_range(0.0..grid.plate_height_cm),
        ];
        let z = zone_of(t, grid).map_err(|e| EvalError::Failed(e.to_string()))?;
        targets.push(t);
        decoded.push(center_of_mass(z, grid));
    }
    rmse(&decoded, &targets)
}

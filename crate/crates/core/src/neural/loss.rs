use ndarray::{Array2, ArrayView2, Axis};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Training targets: class indices for cross-entropy, real rows for MSE.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Targets::Classes(_) => LossKind::CrossEntropy,
            Targets::Values(_) => LossKind::Mse,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select(Axis(0), idx)),
        }
    }
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

fn check(logits: ArrayView2<f64>, targets: &Targets) -> Result<(), NetError> {
    if logits.nrows() != targets.len() {
        return Err(NetError::DimensionMismatch {
            context: "loss batch".into(),
            expected: logits.nrows(),
            found: targets.len(),
        });
    }
    if logits.nrows() == 0 {
        return Err(NetError::InvalidTarget("empty batch".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("loss input".into()));
    }
    match targets {
        Targets::Classes(c) => {
            if let Some(&bad) = c.iter().find(|&&c| c >= logits.ncols()) {
                return Err(NetError::InvalidTarget(format!(
                    "class {bad} >= {} outputs",
                    logits.ncols()
                )));
            }
        }
        Targets::Values(v) => {
            if v.ncols() != logits.ncols() {
                return Err(NetError::DimensionMismatch {
                    context: "regression target width".into(),
                    expected: logits.ncols(),
                    found: v.ncols(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NetError::NonFinite("regression target".into()));
            }
        }
    }
    Ok(())
}

/// Batch-mean loss on raw head outputs (logits for cross-entropy).
pub fn loss(logits: ArrayView2<f64>, targets: &Targets) -> Result<f64, NetError> {
    check(logits, targets)?;
    let b = logits.nrows() as f64;
    Ok(match targets {
        Targets::Classes(classes) => {
            logits
                .rows()
                .into_iter()
                .zip(classes)
                .map(|(row, &c)| {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    lse - row[c]
                })
                .sum::<f64>()
                / b
        }
        Targets::Values(v) => {
            let n = (logits.len()) as f64;
            logits
                .iter()
                .zip(v.iter())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n
        }
    })
}

/// Loss and its gradient with respect to the raw head outputs.
pub fn loss_and_grad(
    logits: ArrayView2<f64>,
    targets: &Targets,
) -> Result<(f64, Array2<f64>), NetError> {
    let value = loss(logits, targets)?;
    let grad = match targets {
        Targets::Classes(classes) => {
            let b = logits.nrows() as f64;
            let mut g = softmax_rows(logits);
            for (mut row, &c) in g.rows_mut().into_iter().zip(classes) {
                row[c] -= 1.0;
                row /= b;
            }
            g
        }
        Targets::Values(v) => {
            let n = logits.len() as f64;
            (&logits - v).mapv(|d| 2.0 * d / n)
        }
    };
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn confident_correct_prediction_has_near_zero_cross_entropy() {
        let mut logits = Array2::zeros((1, 13));
        logits[[0, 4]] = 20.0;
        assert!(loss(logits.view(), &Targets::Classes(vec![4])).unwrap() < 1e-6);
    }

    #[test]
    fn uniform_prediction_over_13_classes() {
        let logits = Array2::from_elem((2, 13), 0.7);
        let l = loss(logits.view(), &Targets::Classes(vec![0, 12])).unwrap();
        assert!((l - 13f64.ln()).abs() < 1e-12);
        assert!((l - 2.5649).abs() < 1e-4);
    }

    #[test]
    fn mse_arithmetic() {
        let l = loss(
            array![[1.0, 2.0]].view(),
            &Targets::Values(array![[4.0, 6.0]]),
        )
        .unwrap();
        assert_eq!(l, 12.5);
    }

    #[test]
    fn errors() {
        assert!(loss(array![[1.0, f64::NAN]].view(), &Targets::Classes(vec![0])).is_err());
        assert!(loss(array![[1.0, 2.0]].view(), &Targets::Classes(vec![2])).is_err());
        assert!(loss(array![[1.0, 2.0]].view(), &Targets::Values(array![[1.0]])).is_err());
    }

    #[test]
    fn softmax_is_a_distribution_even_for_extreme_logits() {
        let p = softmax_rows(array![[1000.0, -1000.0, 3.0], [-5.0, -5.0, -5.0]].view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let logits = array![[0.3, -1.2, 2.0], [0.1, 0.4, -0.6]];
        for targets in [
            Targets::Classes(vec![2, 0]),
            Targets::Values(array![[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]]),
        ] {
            let (_, g) = loss_and_grad(logits.view(), &targets).unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    let h = 1e-6;
                    let mut p = logits.clone();
                    p[[i, j]] += h;
                    let mut m = logits.clone();
                    m[[i, j]] -= h;
                    let fd = (loss(p.view(), &targets).unwrap()
                        - loss(m.view(), &targets).unwrap())
                        / (2.0 * h);
                    assert!((fd - g[[i, j]]).abs() < 1e-8);
                }
            }
        }
    }
}

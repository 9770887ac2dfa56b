use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::loss::softmax_rows;
use super::model::{Head, ModelCheckpoint, StageParams};
use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batchnorm, dropout active, activations cached.
    Train,
    /// Running statistics, no dropout, deterministic.
    Infer,
}

#[derive(Debug, Clone)]
struct StageCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    normalized: Array2<f64>,
    pre_activation: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Activations kept by a train-mode forward pass for [`ModelCheckpoint::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stages: Vec<StageCache>,
    head_input: Array2<f64>,
    widths: Vec<usize>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.head_input.nrows()
    }

    /// Batch mean and biased batch variance seen by stage `s`.
    pub fn batch_stats(&self, s: usize) -> (&Array1<f64>, &Array1<f64>) {
        (&self.stages[s].batch_mean, &self.stages[s].batch_var)
    }
}

pub struct ForwardPass {
    /// Raw head outputs (pre-softmax for classifiers).
    pub logits: Array2<f64>,
    /// Probabilities for classifiers, coordinates for regressors.
    pub output: Array2<f64>,
    pub cache: Option<ForwardCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub stages: Vec<StageGrads>,
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Array2<f64>>,
}

impl Gradients {
    /// Same order as [`ModelCheckpoint::trainable_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(4 * self.stages.len() + 2);
        for st in &self.stages {
            out.push(st.gamma.as_slice().expect("contiguous"));
            out.push(st.beta.as_slice().expect("contiguous"));
            out.push(st.weight.as_slice().expect("contiguous"));
            out.push(st.bias.as_slice().expect("contiguous"));
        }
        out.push(self.head_weight.as_slice().expect("contiguous"));
        out.push(self.head_bias.as_slice().expect("contiguous"));
        out
    }
}

fn affine(z: &Array2<f64>, weight: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut a = z.dot(&weight.t());
    a += bias;
    a
}

impl ModelCheckpoint {
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass, NetError> {
        self.run(x, mode, || rng.random::<f64>())
    }

    fn run(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        mut uniform: impl FnMut() -> f64,
    ) -> Result<ForwardPass, NetError> {
        if x.ncols() != self.spec.input_dim {
            return Err(NetError::DimensionMismatch {
                context: "network input".into(),
                expected: self.spec.input_dim,
                found: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(NetError::DimensionMismatch {
                context: "batch size".into(),
                expected: 1,
                found: 0,
            });
        }
        let train = mode == Mode::Train;
        let eps = self.spec.bn_eps;
        let p = self.spec.dropout_p;
        let keep_scale = 1.0 / (1.0 - p);
        let mut caches = Vec::with_capacity(if train { self.stages.len() } else { 0 });
        let mut h = x.to_owned();
        for st in &self.stages {
            let (mean, var) = if train {
                let mean = h.mean_axis(Axis(0)).expect("non-empty batch");
                let var = (&h - &mean)
                    .mapv(|d| d * d)
                    .mean_axis(Axis(0))
                    .expect("non-empty batch");
                (mean, var)
            } else {
                (st.bn_running_mean.clone(), st.bn_running_var.clone())
            };
            let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
            let x_hat = (&h - &mean) * &inv_std;
            let normalized = &x_hat * &st.bn_gamma + &st.bn_beta;
            let pre_activation = affine(&normalized, &st.weight, &st.bias);
            let mut out = pre_activation.mapv(|v| v.max(0.0));
            let mask = if train && p > 0.0 {
                let m = Array2::from_shape_simple_fn(out.raw_dim(), || {
                    if uniform() < p {
                        0.0
                    } else {
                        keep_scale
                    }
                });
                out *= &m;
                Some(m)
            } else {
                None
            };
            if train {
                caches.push(StageCache {
                    x_hat,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                    normalized,
                    pre_activation,
                    mask,
                });
            }
            h = out;
        }
        let logits = affine(&h, &self.head_weight, &self.head_bias);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("head output".into()));
        }
        let output = match self.spec.head {
            Head::SoftmaxClassifier => softmax_rows(logits.view()),
            Head::LinearRegressor => logits.clone(),
        };
        let cache = train.then(|| ForwardCache {
            stages: caches,
            head_input: h,
            widths: self.spec.widths(),
        });
        Ok(ForwardPass {
            logits,
            output,
            cache,
        })
    }

    /// Deterministic batch inference; returns head outputs after softmax
    /// (classifier) or raw coordinates (regressor).
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.run(x, Mode::Infer, || 1.0)?.output)
    }

    /// Raw head outputs in inference mode.
    pub fn infer_logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.run(x, Mode::Infer, || 1.0)?.logits)
    }

    /// Single-sample inference without batch bookkeeping.
    pub fn infer_one(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.spec.input_dim {
            return Err(NetError::DimensionMismatch {
                context: "network input".into(),
                expected: self.spec.input_dim,
                found: x.len(),
            });
        }
        let eps = self.spec.bn_eps;
        let mut h = Array1::from(x.to_vec());
        for st in &self.stages {
            let z = bn_infer(h.view(), st, eps);
            let mut a = st.weight.dot(&z);
            a += &st.bias;
            a.mapv_inplace(|v| v.max(0.0));
            h = a;
        }
        let mut logits = self.head_weight.dot(&h);
        logits += &self.head_bias;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("head output".into()));
        }
        Ok(match self.spec.head {
            Head::SoftmaxClassifier => {
                let row = logits.view().insert_axis(Axis(0));
                softmax_rows(row).into_raw_vec_and_offset().0
            }
            Head::LinearRegressor => logits.to_vec(),
        })
    }

    /// Exponential moving average of the batch statistics in `cache`; the
    /// variance is stored unbiased.
    pub fn update_running_stats(&mut self, cache: &ForwardCache, momentum: f64) {
        let b = cache.batch_size() as f64;
        let correction = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
        for (st, c) in self.stages.iter_mut().zip(&cache.stages) {
            Zip::from(&mut st.bn_running_mean)
                .and(&c.batch_mean)
                .for_each(|r, &m| *r = (1.0 - momentum) * *r + momentum * m);
            Zip::from(&mut st.bn_running_var)
                .and(&c.batch_var)
                .for_each(|r, &v| *r = (1.0 - momentum) * *r + momentum * v * correction);
        }
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: ArrayView2<f64>,
    ) -> Result<Gradients, NetError> {
        self.backward_full(cache, d_logits, false)
    }

    /// Analytic gradients of a scalar loss whose gradient with respect to
    /// the raw head outputs is `d_logits`. Batchnorm gradients include the
    /// batch-statistics terms; dropout uses the cached masks.
    pub fn backward_full(
        &self,
        cache: &ForwardCache,
        d_logits: ArrayView2<f64>,
        want_input: bool,
    ) -> Result<Gradients, NetError> {
        if cache.widths != self.spec.widths() || cache.stages.len() != self.stages.len() {
            return Err(NetError::StaleCache(format!(
                "cache built for {:?}, model is {}",
                cache.widths,
                self.spec.describe()
            )));
        }
        if d_logits.dim() != (cache.batch_size(), self.spec.output_dim) {
            return Err(NetError::StaleCache(format!(
                "upstream gradient {:?} does not match batch {} x {}",
                d_logits.dim(),
                cache.batch_size(),
                self.spec.output_dim
            )));
        }
        let b = cache.batch_size() as f64;
        let head_weight = d_logits.t().dot(&cache.head_input);
        let head_bias = d_logits.sum_axis(Axis(0));
        let mut upstream = d_logits.dot(&self.head_weight);
        let mut stage_grads = Vec::with_capacity(self.stages.len());
        let mut input = None;
        for (s, (st, c)) in self.stages.iter().zip(&cache.stages).enumerate().rev() {
            if let Some(mask) = &c.mask {
                upstream *= mask;
            }
            Zip::from(&mut upstream)
                .and(&c.pre_activation)
                .for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            let d_a = upstream;
            let weight = d_a.t().dot(&c.normalized);
            let bias = d_a.sum_axis(Axis(0));
            let d_z = d_a.dot(&st.weight);
            let gamma = (&d_z * &c.x_hat).sum_axis(Axis(0));
            let beta = d_z.sum_axis(Axis(0));
            stage_grads.push(StageGrads {
                gamma,
                beta,
                weight,
                bias,
            });
            if s > 0 || want_input {
                let d_xhat = d_z * &st.bn_gamma;
                let sum_d = d_xhat.sum_axis(Axis(0));
                let sum_dx = (&d_xhat * &c.x_hat).sum_axis(Axis(0));
                let mut d_x = d_xhat * b - &sum_d - &c.x_hat * &sum_dx;
                d_x *= &(&c.inv_std / b);
                if s == 0 {
                    input = Some(d_x);
                    upstream = Array2::zeros((0, 0));
                } else {
                    upstream = d_x;
                }
            } else {
                upstream = Array2::zeros((0, 0));
            }
        }
        stage_grads.reverse();
        Ok(Gradients {
            stages: stage_grads,
            head_weight,
            head_bias,
            input,
        })
    }
}

/// Applies a stage's inference-mode batchnorm to one vector.
fn bn_infer(x: ArrayView1<f64>, st: &StageParams, eps: f64) -> Array1<f64> {
    let mut out = x.to_owned();
    Zip::from(&mut out)
        .and(&st.bn_running_mean)
        .and(&st.bn_running_var)
        .and(&st.bn_gamma)
        .and(&st.bn_beta)
        .for_each(|v, &m, &s, &g, &b| *v = (*v - m) / (s + eps).sqrt() * g + b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::loss::{loss_and_grad, Targets};
    use crate::neural::model::NetSpec;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(spec: NetSpec, seed: u64) -> ModelCheckpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ModelCheckpoint::initialize(spec, &mut rng).unwrap();
        for st in &mut m.stages {
            st.bn_gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
            st.bn_beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            st.bias.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
        m
    }

    #[test]
    fn classifier_output_is_distribution() {
        let m = random_model(NetSpec::new(6, vec![5], 4, Head::SoftmaxClassifier), 1);
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j) as f64 * 0.3 - 2.0);
        let out = m.infer(x.view()).unwrap();
        for row in out.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn identity_stage_passes_positive_input() {
        let w = Array2::eye(3);
        let spec = NetSpec::new(3, vec![3], 3, Head::LinearRegressor);
        let m = ModelCheckpoint {
            spec,
            stages: vec![StageParams::identity_bn(w.clone(), Array1::zeros(3))],
            head_weight: w,
            head_bias: Array1::zeros(3),
            train_meta: Default::default(),
        };
        let x = array![[0.5, 1.5, 2.5]];
        let out = m.infer(x.view()).unwrap();
        let scale = 1.0 / (1.0 + 1e-5f64).sqrt();
        for (o, i) in out.iter().zip(x.iter()) {
            assert!((o - i * scale).abs() < 1e-12);
            assert!((o - i).abs() < 1e-4);
        }
    }

    #[test]
    fn infer_one_matches_batch_inference() {
        let m = random_model(NetSpec::new(7, vec![6, 5], 3, Head::SoftmaxClassifier), 4);
        let x = Array2::from_shape_fn((4, 7), |(i, j)| ((i * 13 + j * 5) % 9) as f64 - 4.0);
        let batch = m.infer(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let one = m.infer_one(row.as_slice().unwrap()).unwrap();
            for (a, b) in one.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = random_model(NetSpec::new(4, vec![3], 2, Head::LinearRegressor), 1);
        assert!(matches!(
            m.infer(Array2::zeros((2, 5)).view()),
            Err(NetError::DimensionMismatch { .. })
        ));
        assert!(m.infer_one(&[0.0; 3]).is_err());
    }

    #[test]
    fn no_dropout_full_batch_train_matches_infer_with_frozen_stats() {
        let mut spec = NetSpec::new(5, vec![4, 4], 3, Head::LinearRegressor);
        spec.dropout_p = 0.0;
        let mut m = random_model(spec, 8);
        let x = Array2::from_shape_fn((6, 5), |(i, j)| ((i * 3 + j * 7) % 11) as f64 * 0.2 - 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Freeze the running statistics at the full-batch statistics of every stage.
        for _ in 0..2 {
            let pass = m.forward(x.view(), Mode::Train, &mut rng).unwrap();
            let cache = pass.cache.unwrap();
            for s in 0..m.stages.len() {
                let (mean, var) = cache.batch_stats(s);
                m.stages[s].bn_running_mean = mean.clone();
                m.stages[s].bn_running_var = var.clone();
            }
        }
        let train = m.forward(x.view(), Mode::Train, &mut rng).unwrap().output;
        let infer = m.infer(x.view()).unwrap();
        for (a, b) in train.iter().zip(infer.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let a = random_model(NetSpec::new(4, vec![3], 2, Head::LinearRegressor), 1);
        let b = random_model(NetSpec::new(4, vec![5], 2, Head::LinearRegressor), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = a
            .forward(Array2::ones((3, 4)).view(), Mode::Train, &mut rng)
            .unwrap()
            .cache
            .unwrap();
        assert!(matches!(
            b.backward(&cache, Array2::zeros((3, 2)).view()),
            Err(NetError::StaleCache(_))
        ));
        assert!(matches!(
            a.backward(&cache, Array2::zeros((2, 2)).view()),
            Err(NetError::StaleCache(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let m = random_model(NetSpec::new(6, vec![5, 4], 3, Head::SoftmaxClassifier), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((5, 6), |(i, j)| (i as f64 - j as f64) * 0.3);
        let cache = m
            .forward(x.view(), Mode::Train, &mut rng)
            .unwrap()
            .cache
            .unwrap();
        let g = m
            .backward_full(&cache, Array2::zeros((5, 3)).view(), true)
            .unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(g.input.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let mut spec = NetSpec::new(6, vec![5, 4], 3, Head::SoftmaxClassifier);
        spec.dropout_p = 0.0;
        let m = random_model(spec, 3);
        let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 5 + j * 3) % 7) as f64 * 0.4 - 1.2);
        let t = Targets::Classes(vec![0, 2, 1, 2]);
        let doubled = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let t2 = Targets::Classes(vec![0, 2, 1, 2, 0, 2, 1, 2]);
        let grads = |x: &Array2<f64>, t: &Targets| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let pass = m.forward(x.view(), Mode::Train, &mut rng).unwrap();
            let (_, d) = loss_and_grad(pass.logits.view(), t).unwrap();
            m.backward(&pass.cache.unwrap(), d.view()).unwrap()
        };
        let a = grads(&x, &t);
        let b = grads(&doubled, &t2);
        for (sa, sb) in a.slices().iter().zip(b.slices()) {
            for (u, v) in sa.iter().zip(sb) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}

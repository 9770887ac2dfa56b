use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    SoftmaxClassifier,
    LinearRegressor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub head: Head,
    pub dropout_p: f64,
    pub bn_eps: f64,
}

impl NetSpec {
    pub const DEFAULT_DROPOUT: f64 = 0.3;
    pub const DEFAULT_BN_EPS: f64 = 1e-5;

    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, head: Head) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            head,
            dropout_p: Self::DEFAULT_DROPOUT,
            bn_eps: Self::DEFAULT_BN_EPS,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidSpec(m));
        if self.hidden_dims.is_empty() {
            return bad("at least one hidden stage is required".into());
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return bad(format!("zero-width layer in {}", self.describe()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        if !(self.bn_eps > 0.0) {
            return bad(format!("batchnorm eps {} must be positive", self.bn_eps));
        }
        Ok(())
    }

    /// Widths of every layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }

    /// `392->100->50->13` style summary.
    pub fn describe(&self) -> String {
        self.widths()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("->")
    }

    /// Number of stored floats: four batchnorm vectors per stage input, each
    /// affine layer's weights and biases.
    pub fn parameter_count(&self) -> usize {
        let w = self.widths();
        let stages: usize = w
            .windows(2)
            .take(self.hidden_dims.len())
            .map(|p| 4 * p[0] + p[0] * p[1] + p[1])
            .sum();
        let (last, out) = (w[w.len() - 2], self.output_dim);
        stages + last * out + out
    }
}

/// One `batchnorm -> linear -> ReLU` stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub bn_running_mean: Array1<f64>,
    pub bn_running_var: Array1<f64>,
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl StageParams {
    pub fn identity_bn(weight: Array2<f64>, bias: Array1<f64>) -> Self {
        let n_in = weight.ncols();
        Self {
            bn_gamma: Array1::ones(n_in),
            bn_beta: Array1::zeros(n_in),
            bn_running_mean: Array1::zeros(n_in),
            bn_running_var: Array1::ones(n_in),
            weight,
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: u32,
    pub best_epoch: u32,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    /// Free-form labels, e.g. `task` and `domain`.
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub spec: NetSpec,
    pub stages: Vec<StageParams>,
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
    pub train_meta: TrainMeta,
}

fn glorot<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..=limit))
}

impl ModelCheckpoint {
    /// Glorot-uniform weights, zero biases, identity batchnorm.
    pub fn initialize<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self, NetError> {
        spec.validate()?;
        let widths = spec.widths();
        let n = spec.hidden_dims.len();
        let stages = (0..n)
            .map(|s| {
                StageParams::identity_bn(
                    glorot(widths[s + 1], widths[s], rng),
                    Array1::zeros(widths[s + 1]),
                )
            })
            .collect();
        let head_weight = glorot(spec.output_dim, widths[n], rng);
        let head_bias = Array1::zeros(spec.output_dim);
        Ok(Self {
            spec,
            stages,
            head_weight,
            head_bias,
            train_meta: TrainMeta::default(),
        })
    }

    /// Checks every stored array against the spec, naming the first offender.
    pub fn validate(&self) -> Result<(), NetError> {
        self.spec.validate()?;
        let widths = self.spec.widths();
        if self.stages.len() != self.spec.hidden_dims.len() {
            return Err(NetError::DimensionMismatch {
                context: "stage count".into(),
                expected: self.spec.hidden_dims.len(),
                found: self.stages.len(),
            });
        }
        let check = |ctx: String, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(NetError::DimensionMismatch {
                    context: ctx,
                    expected,
                    found,
                })
            }
        };
        for (s, st) in self.stages.iter().enumerate() {
            let (n_in, n_out) = (widths[s], widths[s + 1]);
            check(format!("stage {} bn_gamma", s + 1), n_in, st.bn_gamma.len())?;
            check(format!("stage {} bn_beta", s + 1), n_in, st.bn_beta.len())?;
            check(
                format!("stage {} bn_running_mean", s + 1),
                n_in,
                st.bn_running_mean.len(),
            )?;
            check(
                format!("stage {} bn_running_var", s + 1),
                n_in,
                st.bn_running_var.len(),
            )?;
            check(
                format!("stage {} weight rows", s + 1),
                n_out,
                st.weight.nrows(),
            )?;
            check(
                format!("stage {} weight cols", s + 1),
                n_in,
                st.weight.ncols(),
            )?;
            check(format!("stage {} bias", s + 1), n_out, st.bias.len())?;
            if st.bn_running_var.iter().any(|v| *v < 0.0) {
                return Err(NetError::InvalidSpec(format!(
                    "stage {} has negative running variance",
                    s + 1
                )));
            }
        }
        let last = widths[widths.len() - 2];
        check(
            "head weight rows".into(),
            self.spec.output_dim,
            self.head_weight.nrows(),
        )?;
        check("head weight cols".into(), last, self.head_weight.ncols())?;
        check(
            "head bias".into(),
            self.spec.output_dim,
            self.head_bias.len(),
        )?;
        Ok(())
    }

    /// Trainable tensors in a fixed order: per stage gamma, beta, weight,
    /// bias; then head weight and bias.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 * self.stages.len() + 2);
        for st in &mut self.stages {
            out.push(st.bn_gamma.as_slice_mut().expect("contiguous"));
            out.push(st.bn_beta.as_slice_mut().expect("contiguous"));
            out.push(st.weight.as_slice_mut().expect("contiguous"));
            out.push(st.bias.as_slice_mut().expect("contiguous"));
        }
        out.push(self.head_weight.as_slice_mut().expect("contiguous"));
        out.push(self.head_bias.as_slice_mut().expect("contiguous"));
        out
    }

    /// Every stored value, trainable or not, rounded to single precision.
    pub fn quantize_to_f32(&mut self) {
        let q = |a: &mut [f64]| a.iter_mut().for_each(|v| *v = *v as f32 as f64);
        for st in &mut self.stages {
            for arr in [
                &mut st.bn_gamma,
                &mut st.bn_beta,
                &mut st.bn_running_mean,
                &mut st.bn_running_var,
                &mut st.bias,
            ] {
                q(arr.as_slice_mut().expect("contiguous"));
            }
            q(st.weight.as_slice_mut().expect("contiguous"));
        }
        q(self.head_weight.as_slice_mut().expect("contiguous"));
        q(self.head_bias.as_slice_mut().expect("contiguous"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn keypad_parameter_count() {
        // Batchnorm (gamma, beta, running mean, running var) sits on the input
        // of each hidden stage only; the head is a bare affine layer.
        // 392*4 + (392*100 + 100) + 100*4 + (100*50 + 50) + (50*13 + 13)
        // = 1568 + 39300 + 400 + 5050 + 663
        let spec = NetSpec::new(392, vec![100, 50], 13, Head::SoftmaxClassifier);
        assert_eq!(spec.parameter_count(), 46_981);
        assert_eq!(spec.describe(), "392->100->50->13");
    }

    #[test]
    fn initialization_shapes_and_bounds() {
        let spec = NetSpec::new(10, vec![8, 6], 4, Head::LinearRegressor);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = ModelCheckpoint::initialize(spec, &mut rng).unwrap();
        m.validate().unwrap();
        let limit = (6.0f64 / 18.0).sqrt();
        assert!(m.stages[0].weight.iter().all(|w| w.abs() <= limit));
        assert!(m.stages[1].bn_running_var.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn spec_validation() {
        assert!(NetSpec::new(4, vec![], 2, Head::LinearRegressor)
            .validate()
            .is_err());
        let mut s = NetSpec::new(4, vec![3], 2, Head::LinearRegressor);
        s.dropout_p = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn validate_names_offending_stage() {
        let spec = NetSpec::new(10, vec![8, 6], 4, Head::LinearRegressor);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut m = ModelCheckpoint::initialize(spec, &mut rng).unwrap();
        m.stages[1].bias = Array1::zeros(5);
        let err = m.validate().unwrap_err().to_string();
        assert!(err.contains("stage 2 bias"), "{err}");
    }
}

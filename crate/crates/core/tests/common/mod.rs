#![allow(dead_code)]

use lambtouch::neural::{loss, loss_and_grad, Head, Mode, ModelCheckpoint, NetSpec, Targets};
use lambtouch::rng::{stream_rng, Stream};
use lambtouch::sigsim::{Finger, RecordSet, TouchEvent};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GROUPS: [&str; 7] = [
    "batchnorm gamma",
    "batchnorm beta",
    "linear weight",
    "linear bias",
    "head weight",
    "head bias",
    "input",
];

/// Worst relative error per parameter group for one randomized trial.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub head: Head,
    pub dropout_p: f64,
    pub worst: [f64; 7],
    /// Largest analytic gradient magnitude, to rule out a vacuous match.
    pub scale: f64,
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares analytic gradients of a randomly initialized 10 -> 8 -> 4 network
/// with central finite differences of the train-mode loss. The dropout mask is
/// held fixed by reseeding the mask stream for every evaluation.
pub fn gradient_trial(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = if seed.is_multiple_of(2) {
        Head::SoftmaxClassifier
    } else {
        Head::LinearRegressor
    };
    let mut spec = NetSpec::new(10, vec![8], 4, head);
    spec.dropout_p = if seed % 4 < 2 { 0.3 } else { 0.0 };
    let mut model = ModelCheckpoint::initialize(spec.clone(), &mut rng).unwrap();
    for st in &mut model.stages {
        st.bn_gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        st.bn_beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let batch = rng.random_range(3..9);
    let x = Array2::from_shape_simple_fn((batch, 10), || rng.random_range(-2.0..2.0));
    let targets = match head {
        Head::SoftmaxClassifier => {
            Targets::Classes((0..batch).map(|_| rng.random_range(0..4)).collect())
        }
        Head::LinearRegressor => Targets::Values(Array2::from_shape_simple_fn((batch, 4), || {
            rng.random_range(-1.0..1.0)
        })),
    };
    let mask_seed: u64 = rng.random();
    let eval = |m: &ModelCheckpoint, x: &Array2<f64>| {
        let pass = m
            .forward(
                x.view(),
                Mode::Train,
                &mut ChaCha8Rng::seed_from_u64(mask_seed),
            )
            .unwrap();
        loss(pass.logits.view(), &targets).unwrap()
    };

    let pass = model
        .forward(
            x.view(),
            Mode::Train,
            &mut ChaCha8Rng::seed_from_u64(mask_seed),
        )
        .unwrap();
    let (_, d) = loss_and_grad(pass.logits.view(), &targets).unwrap();
    let grads = model
        .backward_full(pass.cache.as_ref().unwrap(), d.view(), true)
        .unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let d_input = grads.input.clone().unwrap();

    let h = 1e-5;
    let mut worst = [0.0f64; 7];
    let group_of = |slot: usize, n_slots: usize| {
        if slot + 2 >= n_slots {
            4 + (slot + 2 - n_slots)
        } else {
            slot % 4
        }
    };
    let n_slots = analytic.len();
    for (slot, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = model.clone();
            plus.trainable_mut()[slot][k] += h;
            let mut minus = model.clone();
            minus.trainable_mut()[slot][k] -= h;
            let numeric = (eval(&plus, &x) - eval(&minus, &x)) / (2.0 * h);
            let g = group_of(slot, n_slots);
            worst[g] = worst[g].max(rel(a, numeric));
        }
    }
    for idx in 0..x.len() {
        let (r, c) = (idx / 10, idx % 10);
        let mut xp = x.clone();
        xp[[r, c]] += h;
        let mut xm = x.clone();
        xm[[r, c]] -= h;
        let numeric = (eval(&model, &xp) - eval(&model, &xm)) / (2.0 * h);
        worst[6] = worst[6].max(rel(d_input[[r, c]], numeric));
    }
    let scale = analytic
        .iter()
        .flatten()
        .chain(d_input.iter())
        .fold(0.0f64, |m, g| m.max(g.abs()));
    GradCheck {
        head,
        dropout_p: spec.dropout_p,
        worst,
        scale,
    }
}

/// Random records whose fields are all exactly representable in f32.
pub fn random_records(seed: u64, count: usize, samples: usize) -> Vec<RecordSet> {
    let mut rng = stream_rng(seed, 0, Stream::MonteCarlo);
    (0..count)
        .map(|i| RecordSet {
            event: TouchEvent {
                x_cm: (rng.random::<f32>() * 20.0) as f64,
                y_cm: rng.random::<f32>() as f64,
                pressure: rng.random_range(0.2f32..1.0) as f64,
                finger: if rng.random() {
                    Finger::Human
                } else {
                    Finger::Robot
                },
                seed_index: i as u64,
            },
            waveforms: Array2::from_shape_simple_fn((4, samples), || {
                f32::from_bits(rng.random::<u32>() & 0xBF7F_FFFF) as f64
            }),
        })
        .collect()
}

/// Random small f32-quantized network with nontrivial batchnorm statistics.
pub fn random_model(seed: u64) -> ModelCheckpoint {
    let mut rng = stream_rng(seed, 0, Stream::Init);
    let input = rng.random_range(1..12);
    let hidden: Vec<usize> = (0..rng.random_range(1..4))
        .map(|_| rng.random_range(1..10))
        .collect();
    let head = if rng.random() {
        Head::SoftmaxClassifier
    } else {
        Head::LinearRegressor
    };
    let mut spec = NetSpec::new(input, hidden, rng.random_range(1..6), head);
    spec.dropout_p = rng.random_range(0.0..0.9);
    let mut m = ModelCheckpoint::initialize(spec, &mut rng).unwrap();
    for st in &mut m.stages {
        st.bn_running_mean
            .mapv_inplace(|_| rng.random_range(-3.0..3.0));
        st.bn_running_var
            .mapv_inplace(|_| rng.random_range(0.1..4.0));
        st.bn_gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
    }
    m.quantize_to_f32();
    m.train_meta.seed = rng.random();
    m.train_meta.epochs = rng.random_range(1..500);
    m.train_meta.final_val_loss = rng.random();
    m.train_meta
        .tags
        .insert("task".into(), format!("grid:{}", rng.random_range(2..11)));
    m
}

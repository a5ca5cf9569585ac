//! Central finite-difference oracle for layer gradients.

use iosearch::nn::{LayerSpec, LossKind, Network, Target, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

pub fn layer_kinds() -> Vec<&'static str> {
    vec![
        "Conv1D",
        "Conv2D",
        "TransposedConv1D",
        "TransposedConv2D",
        "MaxPool",
        "Upsample",
        "Dense",
        "ReLU",
        "Softmax",
        "Flatten",
        "ChannelConcat",
    ]
}

/// Small network isolating one layer kind; param-free kinds get a dense or
/// convolutional neighbour so parameter gradients flow through them.
fn fixture(kind: &str) -> (Vec<usize>, Vec<LayerSpec>) {
    match kind {
        "Conv1D" => (vec![6, 1], vec![LayerSpec::Conv1D { kernel_size: 4, kernel_count: 2 }]),
        "Conv2D" => (vec![2, 3, 1], vec![LayerSpec::conv2d(2)]),
        "TransposedConv1D" => (vec![5, 1], vec![LayerSpec::TransposedConv1D { kernel_size: 4, kernel_count: 2 }]),
        "TransposedConv2D" => (
            vec![2, 3, 1],
            vec![LayerSpec::TransposedConv2D { kernel_size: [3, 3], kernel_count: 2 }],
        ),
        "MaxPool" => (vec![2, 4, 1], vec![LayerSpec::conv2d(1), LayerSpec::max_pool()]),
        "Upsample" => (
            vec![2, 2, 1],
            vec![LayerSpec::conv2d(1), LayerSpec::Upsample { pool_factor: 2, output_size: None }],
        ),
        "Dense" => (vec![6], vec![LayerSpec::Dense { units: 3 }]),
        "ReLU" => (vec![6], vec![LayerSpec::Dense { units: 4 }, LayerSpec::ReLU]),
        "Softmax" => (vec![5], vec![LayerSpec::Dense { units: 4 }, LayerSpec::Softmax]),
        "Flatten" => (vec![2, 3, 1], vec![LayerSpec::conv2d(1), LayerSpec::Flatten]),
        "ChannelConcat" => (
            vec![2, 3, 1],
            vec![LayerSpec::ChannelConcat { branch: vec![LayerSpec::conv2d(2), LayerSpec::ReLU] }],
        ),
        other => panic!("unknown layer kind {other}"),
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Random values bounded away from zero so ReLU kinks stay out of reach.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect()
}

/// Worst relative error across parameter and input gradients over
/// `instances` random draws.
pub fn check_layer_kind(kind: &str, instances: u64) -> f64 {
    let (shape, layers) = fixture(kind);
    let mut worst: f64 = 0.0;
    for trial in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let net = Network::build(&shape, layers.clone(), trial).unwrap();
        let n = 2;
        let per: usize = shape.iter().product();
        let mut full = vec![n];
        full.extend(&shape);
        let x = Tensor::new(full, away_from_zero(&mut rng, n * per)).unwrap();
        let out_shape: Vec<usize> = std::iter::once(n).chain(net.output_shape().iter().copied()).collect();
        let out_len: usize = out_shape.iter().product();
        let t = Tensor::new(out_shape.clone(), (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let target = Target::Values { values: &t, weights: None };

        let (_, grads) = net.backward(&x, target, LossKind::Rmse).unwrap();
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += STEP;
            let mut minus = net.clone();
            minus.params_mut()[i] -= STEP;
            let lp = plus.evaluate_loss(&x, target, LossKind::Rmse).unwrap();
            let lm = minus.evaluate_loss(&x, target, LossKind::Rmse).unwrap();
            worst = worst.max(rel_err(grads[i], (lp - lm) / (2.0 * STEP)));
        }

        // Input gradient of s(x) = <net(x), u> for a random u.
        let u = Tensor::new(out_shape, (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let dx = net.input_gradient(&x, &u).unwrap();
        let s = |x: &Tensor| -> f64 { net.forward(x).unwrap().data().iter().zip(u.data()).map(|(a, b)| a * b).sum() };
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += STEP;
            let mut xm = x.clone();
            xm.data_mut()[i] -= STEP;
            worst = worst.max(rel_err(dx.data()[i], (s(&xp) - s(&xm)) / (2.0 * STEP)));
        }
    }
    worst
}

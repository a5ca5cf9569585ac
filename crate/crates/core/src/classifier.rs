//! Shallow CNN classifier, used both on plain inputs and on inputs augmented
//! with an autoencoder reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, LayerSpec, LossKind, Network, Samples, Target, Tensor, TrainConfig, TrainHistory};

/// How a reconstruction is joined to the original input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentMode {
    /// Channel-axis concatenation, original channels first.
    #[default]
    Concat,
    /// Elementwise sum; the channel count is unchanged.
    Add,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kernel_count: usize,
    /// 3 (as 3×3) for images and 4 for series when unset.
    pub kernel_size: Option<usize>,
    pub conv_layers: usize,
    pub dense_width: usize,
    pub augment: AugmentMode,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kernel_count: 16,
            kernel_size: None,
            conv_layers: 2,
            dense_width: 64,
            augment: AugmentMode::Concat,
        }
    }
}

impl ClassifierConfig {
    pub fn with_kernels(&self, kernel_count: usize) -> Self {
        Self {
            kernel_count,
            ..self.clone()
        }
    }
}

/// `conv_layers × (Conv-ReLU-MaxPool)`, then Flatten-Dense-ReLU-Dense-Softmax.
pub fn build_classifier(input_shape: &[usize], class_count: usize, cfg: &ClassifierConfig, seed: u64) -> Result<Network> {
    if cfg.kernel_count == 0 || cfg.dense_width == 0 || class_count == 0 {
        return Err(Error::Config(
            "kernel_count, dense_width and class_count must be positive".into(),
        ));
    }
    let conv = match input_shape.len() {
        3 => {
            let k = cfg.kernel_size.unwrap_or(3);
            LayerSpec::Conv2D {
                kernel_size: [k, k],
                kernel_count: cfg.kernel_count,
            }
        }
        2 => LayerSpec::Conv1D {
            kernel_size: cfg.kernel_size.unwrap_or(4),
            kernel_count: cfg.kernel_count,
        },
        _ => {
            return Err(Error::Shape(format!(
                "classifier needs (len, ch) or (h, w, ch) input, got {input_shape:?}"
            )))
        }
    };
    let mut layers = Vec::new();
    for _ in 0..cfg.conv_layers {
        layers.extend([conv.clone(), LayerSpec::ReLU, LayerSpec::max_pool()]);
    }
    layers.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense { units: cfg.dense_width },
        LayerSpec::ReLU,
        LayerSpec::Dense { units: class_count },
        LayerSpec::Softmax,
    ]);
    Network::build(input_shape, layers, seed)
}

/// Joins `x` and its reconstruction according to `mode`.
pub fn make_augmented(x: &Tensor, recon: &Tensor, mode: AugmentMode) -> Result<Tensor> {
    if x.shape() != recon.shape() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} does not match input {:?}",
            recon.shape(),
            x.shape()
        )));
    }
    match mode {
        AugmentMode::Add => {
            let data = x.data().iter().zip(recon.data()).map(|(a, b)| a + b).collect();
            Tensor::new(x.shape().to_vec(), data)
        }
        AugmentMode::Concat => {
            let c = *x.shape().last().unwrap();
            let mut data = Vec::with_capacity(2 * x.len());
            for (a, b) in x.data().chunks_exact(c).zip(recon.data().chunks_exact(c)) {
                data.extend_from_slice(a);
                data.extend_from_slice(b);
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() *= 2;
            Tensor::new(shape, data)
        }
    }
}

/// Inverse of the concatenating [`make_augmented`].
pub fn split_augmented(aug: &Tensor) -> Result<(Tensor, Tensor)> {
    let c2 = *aug.shape().last().unwrap();
    if !c2.is_multiple_of(2) {
        return Err(Error::Shape(format!("odd channel count {c2} cannot be split")));
    }
    let c = c2 / 2;
    let mut a = Vec::with_capacity(aug.len() / 2);
    let mut b = Vec::with_capacity(aug.len() / 2);
    for px in aug.data().chunks_exact(c2) {
        a.extend_from_slice(&px[..c]);
        b.extend_from_slice(&px[c..]);
    }
    let mut shape = aug.shape().to_vec();
    *shape.last_mut().unwrap() = c;
    Ok((Tensor::new(shape.clone(), a)?, Tensor::new(shape, b)?))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(net: &Network, x: &Tensor) -> Result<Vec<usize>> {
    let probs = net.forward(x)?;
    Ok((0..probs.instances()).map(|i| argmax(probs.instance(i))).collect())
}

/// Fraction of instances whose argmax prediction equals the label.
pub fn evaluate_accuracy(net: &Network, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if x.instances() == 0 {
        return Err(Error::Data("cannot score an empty split".into()));
    }
    if labels.len() != x.instances() {
        return Err(Error::Shape(format!("{} instances but {} labels", x.instances(), labels.len())));
    }
    let pred = predict(net, x)?;
    Ok(accuracy(&pred, labels))
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Builds and trains a classifier with cross-entropy loss.
pub fn train_classifier(
    train: (&Tensor, &[usize]),
    val: (&Tensor, &[usize]),
    class_count: usize,
    cfg: &ClassifierConfig,
    train_cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    let net = build_classifier(train.0.instance_shape(), class_count, cfg, train_cfg.seed)?;
    let tc = TrainConfig {
        loss: LossKind::CrossEntropy,
        ..train_cfg.clone()
    };
    nn::train(
        net,
        Samples::new(train.0, Target::Labels(train.1)),
        Samples::new(val.0, Target::Labels(val.1)),
        &tc,
    )
}

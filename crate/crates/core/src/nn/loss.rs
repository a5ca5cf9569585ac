use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Guard for the square root in the RMSE gradient.
pub const RMSE_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "RMSE")]
    Rmse,
    CrossEntropy,
}

/// Supervision for one batch of network outputs.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    /// Regression targets. `weights` is a per-position mask shared by every
    /// instance; positions with weight 0 carry no loss and no gradient.
    Values {
        values: &'a Tensor,
        weights: Option<&'a [f64]>,
    },
    Labels(&'a [usize]),
}

impl Target<'_> {
    pub fn instances(&self) -> usize {
        match self {
            Target::Values { values, .. } => values.instances(),
            Target::Labels(l) => l.len(),
        }
    }
}

/// Additive loss statistics, so a split can be scored in chunks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossSum {
    pub sum: f64,
    pub count: f64,
}

impl LossSum {
    pub fn merge(self, other: LossSum) -> LossSum {
        LossSum {
            sum: self.sum + other.sum,
            count: self.count + other.count,
        }
    }

    pub fn value(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::Rmse => (self.sum / self.count).sqrt(),
            LossKind::CrossEntropy => self.sum / self.count,
        }
    }
}

pub fn squared_error(output: &[f64], target: &[f64], weights: Option<&[f64]>) -> LossSum {
    match weights {
        None => LossSum {
            sum: output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum(),
            count: output.len() as f64,
        },
        Some(w) => {
            let n = output.len() / w.len();
            let per: f64 = w.iter().sum();
            let mut sum = 0.0;
            for (yr, tr) in output.chunks_exact(w.len()).zip(target.chunks_exact(w.len())) {
                for ((y, t), wi) in yr.iter().zip(tr).zip(w) {
                    let d = y - t;
                    sum += wi * (d * d);
                }
            }
            LossSum {
                sum,
                count: n as f64 * per,
            }
        }
    }
}

/// RMSE over the weighted positions and its gradient w.r.t. `output`.
pub fn rmse_with_grad(output: &[f64], target: &[f64], weights: Option<&[f64]>) -> (f64, Vec<f64>) {
    let parts = squared_error(output, target, weights);
    let loss = parts.value(LossKind::Rmse);
    let scale = 1.0 / (parts.count * loss.max(RMSE_EPSILON));
    let grad = match weights {
        None => output.iter().zip(target).map(|(y, t)| (y - t) * scale).collect(),
        Some(w) => output
            .iter()
            .zip(target)
            .zip(w.iter().cycle())
            .map(|((y, t), wi)| wi * (y - t) * scale)
            .collect(),
    };
    (loss, grad)
}

pub fn cross_entropy(probs: &[f64], labels: &[usize]) -> LossSum {
    let classes = probs.len() / labels.len().max(1);
    let sum = probs
        .chunks_exact(classes)
        .zip(labels)
        .map(|(p, &l)| -p[l].max(f64::MIN_POSITIVE).ln())
        .sum();
    LossSum {
        sum,
        count: labels.len() as f64,
    }
}

/// Gradient of mean cross-entropy w.r.t. the probabilities.
pub fn cross_entropy_grad(probs: &[f64], labels: &[usize]) -> Vec<f64> {
    let classes = probs.len() / labels.len();
    let n = labels.len() as f64;
    let mut g = vec![0.0; probs.len()];
    for (i, &l) in labels.iter().enumerate() {
        g[i * classes + l] = -1.0 / (n * probs[i * classes + l].max(f64::MIN_POSITIVE));
    }
    g
}

/// Gradient of mean cross-entropy w.r.t. the logits feeding a softmax.
pub fn softmax_cross_entropy_grad(probs: &[f64], labels: &[usize]) -> Vec<f64> {
    let classes = probs.len() / labels.len();
    let n = labels.len() as f64;
    let mut g: Vec<f64> = probs.iter().map(|p| p / n).collect();
    for (i, &l) in labels.iter().enumerate() {
        g[i * classes + l] -= 1.0 / n;
    }
    g
}

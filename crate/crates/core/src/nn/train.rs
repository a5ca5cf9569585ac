//! Mini-batch Adam training with early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{LossKind, Target};
use super::network::Network;
use super::optim::Adam;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before training stops.
    pub patience: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            loss: LossKind::Rmse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train config: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0 && self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience cannot exceed max_epochs");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Inputs plus supervision for one split.
#[derive(Clone, Copy, Debug)]
pub struct Samples<'a> {
    pub inputs: &'a Tensor,
    pub target: Target<'a>,
}

impl<'a> Samples<'a> {
    pub fn new(inputs: &'a Tensor, target: Target<'a>) -> Self {
        Self { inputs, target }
    }

    pub fn len(&self) -> usize {
        self.inputs.instances()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }
}

/// Trains `net` and returns the parameters of the best validation epoch.
pub fn train(mut net: Network, train: Samples<'_>, val: Samples<'_>, cfg: &TrainConfig) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation splits must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(
        net.params().len(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_epsilon,
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs = train.inputs.select(batch);
            let (loss, grads) = match train.target {
                Target::Values { values, weights } => {
                    let t = values.select(batch);
                    net.backward_owned(inputs, Target::Values { values: &t, weights }, cfg.loss)
                }
                Target::Labels(labels) => {
                    let l: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                    net.backward_owned(inputs, Target::Labels(&l), cfg.loss)
                }
            }
            .map_err(|e| divergence(e, epoch))?;
            adam.step(net.params_mut(), &grads);
            weighted += loss * batch.len() as f64;
        }
        let train_loss = weighted / train.len() as f64;
        let val_loss = net
            .evaluate_loss(val.inputs, val.target, cfg.loss)
            .map_err(|e| divergence(e, epoch))?;
        if !train_loss.is_finite() || !val_loss.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);

        let improved = best.as_ref().is_none_or(|(b, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, net.params().to_vec()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    net.set_params(params)?;
    Ok((net, history))
}

fn divergence(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Divergence { epoch, loss: f64::NAN },
        other => other,
    }
}

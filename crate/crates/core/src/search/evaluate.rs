use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{train_io, IOArch, IOAutoencoder, IOConfig, ReconstructionReport};
use crate::classifier::{evaluate_accuracy, make_augmented, train_classifier, ClassifierConfig};
use crate::data::{Dataset, Split};
use crate::error::Result;
use crate::nn::TrainConfig;

/// Classification accuracy obtained with a given input/output configuration.
pub trait AccuracyEvaluator: Sync {
    /// One accuracy per repetition; repetition `i` uses seed `base_seed + i`.
    fn accuracies(&self, ds: &Dataset, io: &IOConfig, base_seed: u64, repetitions: usize) -> Result<Vec<f64>>;
}

/// Trains the IO autoencoder for `io`, then classifiers on the original input
/// joined with its reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedEvaluator {
    pub arch: IOArch,
    pub io_train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub classifier_train: TrainConfig,
    /// Split the accuracy is measured on.
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedOutcome {
    pub accuracies: Vec<f64>,
    pub reconstruction: ReconstructionReport,
}

impl AugmentedEvaluator {
    /// Trained autoencoder plus the dataset with augmented features.
    pub fn augment(&self, ds: &Dataset, io: &IOConfig, seed: u64) -> Result<(Dataset, ReconstructionReport)> {
        let ae = IOAutoencoder::new(ds.feature_shape(), io.clone(), self.arch.clone(), seed)?;
        let (ae, report, _) = train_io(ae, ds, &self.io_train.with_seed(seed))?;
        let recon = ae.reconstruct(&ds.features)?;
        let aug = make_augmented(&ds.features, &recon, self.classifier.augment)?;
        Ok((ds.with_features(aug)?, report))
    }

    pub fn evaluate(&self, ds: &Dataset, io: &IOConfig, base_seed: u64, repetitions: usize) -> Result<AugmentedOutcome> {
        let (aug, reconstruction) = self.augment(ds, io, base_seed)?;
        let accuracies = classifier_accuracies(&aug, &self.classifier, &self.classifier_train, self.split, base_seed, repetitions)?;
        Ok(AugmentedOutcome {
            accuracies,
            reconstruction,
        })
    }
}

impl AccuracyEvaluator for AugmentedEvaluator {
    fn accuracies(&self, ds: &Dataset, io: &IOConfig, base_seed: u64, repetitions: usize) -> Result<Vec<f64>> {
        Ok(self.evaluate(ds, io, base_seed, repetitions)?.accuracies)
    }
}

/// Trains `repetitions` classifiers on Train (early stopping on Val) and
/// scores each on `split`.
pub fn classifier_accuracies(
    ds: &Dataset,
    cfg: &ClassifierConfig,
    train_cfg: &TrainConfig,
    split: Split,
    base_seed: u64,
    repetitions: usize,
) -> Result<Vec<f64>> {
    let (tx, ty) = ds.part(Split::Train);
    let (vx, vy) = ds.part(Split::Val);
    let (sx, sy) = ds.part(split);
    (0..repetitions as u64)
        .into_par_iter()
        .map(|i| {
            let tc = train_cfg.with_seed(base_seed.wrapping_add(i));
            let (net, _) = train_classifier((&tx, &ty), (&vx, &vy), ds.class_count, cfg, &tc)?;
            evaluate_accuracy(&net, &sx, &sy)
        })
        .collect()
}

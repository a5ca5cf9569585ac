//! Datasets and the preprocessing steps applied before a search: loading,
//! normalisation, splitting, window slicing, statistical feature generation,
//! noise corruption and resolution reduction.

mod features;
mod loaders;
mod noise;
mod normalize;
mod resample;
mod split;
mod window;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use features::{generate_features, FeatureGenConfig, Statistic};
pub use loaders::{clean_series, load_cifar_batch, load_csv, load_idx, load_series_csv, CsvSchema, Series};
pub use noise::{add_noise, NoiseKind, NoiseSpec};
pub use normalize::{normalize, NormMode, NormStats};
pub use resample::{downsample_dataset, downsample_image};
pub use split::{apportion, split_dataset, SplitRatio};
pub use window::{window_slice, SeriesLabels, WindowConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// Instances of shape `(spatial..., channels)` with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub channel_names: Option<Vec<String>>,
    pub split: Vec<Split>,
}

impl Dataset {
    /// New dataset with every instance assigned to the training split.
    pub fn new(features: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n = features.instances();
        if labels.len() != n {
            return Err(Error::Data(format!("{n} instances but {} labels", labels.len())));
        }
        if n == 0 {
            return Err(Error::Data("no instances".into()));
        }
        if class_count == 0 {
            return Err(Error::Data("class_count must be positive".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Data(format!("label {l} outside {class_count} classes")));
        }
        if features.shape().len() < 2 {
            return Err(Error::Data("features need at least one non-instance dimension".into()));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            channel_names: None,
            split: vec![Split::Train; n],
        })
    }

    pub fn instances(&self) -> usize {
        self.labels.len()
    }

    /// Per-instance shape, channels last.
    pub fn feature_shape(&self) -> &[usize] {
        self.features.instance_shape()
    }

    /// Number of scalar feature positions per instance.
    pub fn feature_count(&self) -> usize {
        self.features.instance_len()
    }

    pub fn channels(&self) -> usize {
        *self.feature_shape().last().unwrap()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Features and labels of one split.
    pub fn part(&self, split: Split) -> (Tensor, Vec<usize>) {
        let idx = self.indices(split);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (self.features.select(&idx), labels)
    }

    /// Keeps the listed instances (with their split tags), in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            channel_names: self.channel_names.clone(),
            split: indices.iter().map(|&i| self.split[i]).collect(),
        }
    }

    pub fn with_features(&self, features: Tensor) -> Result<Dataset> {
        if features.instances() != self.instances() {
            return Err(Error::Shape("replacement features change the instance count".into()));
        }
        Ok(Dataset {
            features,
            ..self.clone()
        })
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut m: BTreeMap<Split, usize> = Split::ALL.iter().map(|s| (*s, 0)).collect();
        for s in &self.split {
            *m.get_mut(s).unwrap() += 1;
        }
        m
    }

    /// SHA-256 over shape, feature bits, labels and split tags.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in self.features.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in self.features.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        for l in &self.labels {
            h.update((*l as u64).to_le_bytes());
        }
        for s in &self.split {
            h.update([*s as u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn manifest(&self, normalization: Option<NormStats>) -> DatasetManifest {
        DatasetManifest {
            schema_version: 1,
            instances: self.instances(),
            feature_shape: self.feature_shape().to_vec(),
            class_count: self.class_count,
            class_histogram: self.class_histogram(),
            split_counts: self.split_counts(),
            channel_names: self.channel_names.clone(),
            normalization,
            content_hash: self.content_hash(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub instances: usize,
    pub feature_shape: Vec<usize>,
    pub class_count: usize,
    pub class_histogram: Vec<usize>,
    pub split_counts: BTreeMap<Split, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
    pub content_hash: String,
}

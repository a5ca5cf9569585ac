use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::IOArch;
use crate::classifier::ClassifierConfig;
use crate::data::{CsvSchema, FeatureGenConfig, NoiseKind, NoiseSpec, NormMode, SplitRatio, WindowConfig};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::search::{HierConfig, KernelSearchConfig, NeuralScorer, SFSConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Where instances come from. Relative paths resolve against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// IDX image and label files, optionally gzipped.
    Idx { images: PathBuf, labels: PathBuf },
    /// CIFAR binary batches, concatenated in order.
    Cifar { batches: Vec<PathBuf> },
    /// One instance per row.
    Csv { path: PathBuf, schema: CsvSchema },
    /// One timestep per row, cut into windows.
    Series {
        path: PathBuf,
        schema: CsvSchema,
        window: WindowConfig,
        /// Expand a single channel into statistical descriptors first.
        #[serde(default)]
        feature_generation: Option<FeatureGenConfig>,
        #[serde(default = "default_max_missing")]
        max_missing: f64,
    },
}

fn default_max_missing() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

fn default_norm() -> Option<NormMode> {
    Some(NormMode::MinMax)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Keep only the first `n` instances after loading.
    #[serde(default)]
    pub limit: Option<usize>,
    /// Block-mean reduction factor for images.
    #[serde(default)]
    pub downsample: Option<usize>,
    #[serde(default)]
    pub split: SplitRatio,
    #[serde(default = "yes")]
    pub stratified: bool,
    #[serde(default = "default_norm")]
    pub normalization: Option<NormMode>,
    #[serde(default = "yes")]
    pub per_channel: bool,
}

impl DatasetConfig {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.source {
            DatasetSource::Idx { images, labels } => {
                fix(images);
                fix(labels);
            }
            DatasetSource::Cifar { batches } => batches.iter_mut().for_each(fix),
            DatasetSource::Csv { path, .. } | DatasetSource::Series { path, .. } => fix(path),
        }
    }
}

/// Candidate scoring: the IO autoencoder trained for every candidate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub arch: IOArch,
    pub train: TrainConfig,
    pub train_subset: Option<usize>,
}

impl AutoencoderConfig {
    pub fn scorer(&self) -> NeuralScorer {
        NeuralScorer {
            arch: self.arch.clone(),
            train: self.train.clone(),
            train_subset: self.train_subset,
        }
    }
}

/// Accuracy measurement: the autoencoder that produces the augmentation and
/// the classifiers trained on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub io_train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub classifier_train: TrainConfig,
    /// Paired plain/augmented trainings in the final test comparison.
    pub test_repetitions: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            io_train: TrainConfig::default(),
            classifier: ClassifierConfig::default(),
            classifier_train: TrainConfig::default(),
            test_repetitions: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub dataset: DatasetConfig,
    /// `search.seed` is replaced by a seed derived from `seed`.
    #[serde(default)]
    pub search: SFSConfig,
    #[serde(default)]
    pub autoencoder: AutoencoderConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Kernel-count search for the final classifier; skipped when absent.
    #[serde(default)]
    pub kernel_search: Option<KernelSearchConfig>,
    /// Present: `search` runs coarse-to-fine.
    #[serde(default)]
    pub hier: Option<HierConfig>,
    /// Noise variants for the robustness suite; the four default kinds when
    /// absent.
    #[serde(default)]
    pub noise: Option<Vec<NoiseSpec>>,
    /// Iterations clustered by the robustness suite; all common steps when
    /// absent.
    #[serde(default)]
    pub stability_iterations: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.resolve(base);
        if let Some(out) = &mut cfg.output_dir {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.search.validate()?;
        self.autoencoder.train.validate()?;
        self.evaluation.io_train.validate()?;
        self.evaluation.classifier_train.validate()?;
        if self.evaluation.test_repetitions == 0 {
            return Err(Error::Config("evaluation.test_repetitions must be positive".into()));
        }
        if self.evaluation.classifier.kernel_count == 0 || self.evaluation.classifier.conv_layers == 0 {
            return Err(Error::Config("classifier needs kernels and at least one conv layer".into()));
        }
        if let Some(k) = &self.kernel_search {
            k.validate()?;
        }
        if let Some(h) = &self.hier {
            h.validate()?;
        }
        for spec in self.noise.iter().flatten() {
            spec.validate()?;
        }
        if self.dataset.downsample == Some(0) || self.dataset.limit == Some(0) {
            return Err(Error::Config("dataset.limit and dataset.downsample must be positive".into()));
        }
        if let DatasetSource::Series { max_missing, .. } = &self.dataset.source {
            if !(0.0..=1.0).contains(max_missing) {
                return Err(Error::Config("max_missing must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Noise variants of the robustness suite.
    pub fn noise_specs(&self) -> Vec<NoiseSpec> {
        self.noise.clone().unwrap_or_else(|| {
            [
                NoiseKind::Gaussian { sigma: 0.1 },
                NoiseKind::Poisson,
                NoiseKind::SaltPepper { amount: 0.05 },
                NoiseKind::MotionBlur {
                    kernel_length: 5,
                    angle: 0.0,
                },
            ]
            .into_iter()
            .map(|kind| NoiseSpec { kind, seed: self.seed })
            .collect()
        })
    }
}

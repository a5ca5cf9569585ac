//! Repetition statistics, stability clustering of selected features across
//! noise variants, and on-disk report artifacts.

mod artifacts;
mod kmeans;
mod stability;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use artifacts::{
    emit_artifacts, ArtifactManifest, FinalEvaluation, RunRecord, RunSeeds, Telemetry, RECORD_SCHEMA_VERSION,
};
pub use kmeans::{kmeans, KMeans, KMEANS_MAX_ITERATIONS};
pub use stability::{cluster_selected_features, ClusterSummary, IterationClusters, StabilityReport, VariantSelection};

/// Mean and population standard deviation together with the raw values they
/// were computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot summarise zero values".into()));
        }
        let (mean, std) = crate::search::mean_std(&values);
        Ok(Self { mean, std, values })
    }
}

/// Runs `run_fn(base_seed + i)` for `i < n`. A failing repetition aborts the
/// loop; the finished values travel inside [`Error::Repetition`].
pub fn repeat_and_average(mut run_fn: impl FnMut(u64) -> Result<f64>, n: usize, base_seed: u64) -> Result<Summary> {
    if n == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        match run_fn(base_seed.wrapping_add(i as u64)) {
            Ok(v) => values.push(v),
            Err(e) => {
                return Err(Error::Repetition {
                    index: i,
                    completed: values,
                    source: Box::new(e),
                })
            }
        }
    }
    Summary::from_values(values)
}

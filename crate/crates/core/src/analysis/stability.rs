use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeans};
use crate::error::{Error, Result};
use crate::search::{feature_ranking, SearchTrace};

/// Selection order of one dataset variant (original or a noise type).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSelection {
    pub name: String,
    pub feature_shape: Vec<usize>,
    pub ranking: Vec<usize>,
}

impl VariantSelection {
    pub fn from_trace(name: impl Into<String>, trace: &SearchTrace) -> Self {
        Self {
            name: name.into(),
            feature_shape: trace.feature_shape.clone(),
            ranking: feature_ranking(trace),
        }
    }

    /// `(row, col)` of the first `t` picks.
    fn coords(&self, t: usize) -> Vec<[usize; 2]> {
        let (w, c) = (self.feature_shape[1], self.feature_shape[2]);
        self.ranking[..t].iter().map(|&p| [(p / c) / w, (p / c) % w]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub centroid: [f64; 2],
    /// Pooled coordinates in this cluster, counted per variant.
    pub members_per_variant: Vec<usize>,
    /// Mean distance of the members to the centroid (0 when empty).
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationClusters {
    pub iteration: usize,
    pub cluster_count: usize,
    /// Pooled coordinates and the variant each came from.
    pub points: Vec<[f64; 2]>,
    pub point_variant: Vec<usize>,
    pub kmeans: KMeans,
    pub clusters: Vec<ClusterSummary>,
    /// Mean over non-empty clusters of `1 - radius / image diagonal`.
    pub agreement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub feature_shape: Vec<usize>,
    pub variants: Vec<String>,
    /// First picks of each variant as `(row, col)`.
    pub coordinates: Vec<Vec<[usize; 2]>>,
    /// One entry per iteration `1..=t`, clustered with `k` equal to the
    /// iteration.
    pub iterations: Vec<IterationClusters>,
}

/// Pools the first `i` selected coordinates of every variant and clusters
/// them into `i` groups, for each `i` up to `t`.
pub fn cluster_selected_features(variants: &[VariantSelection], t: usize, seed: u64) -> Result<StabilityReport> {
    let first = variants.first().ok_or_else(|| Error::Data("no variants to compare".into()))?;
    if t == 0 {
        return Err(Error::Config("clustering needs at least one iteration".into()));
    }
    let shape = first.feature_shape.clone();
    if shape.len() != 3 {
        return Err(Error::Data(format!("feature clustering needs (h, w, c) images, got {shape:?}")));
    }
    for v in variants {
        if v.feature_shape != shape {
            return Err(Error::Data(format!("variant {} has shape {:?}, expected {shape:?}", v.name, v.feature_shape)));
        }
        if v.ranking.len() < t {
            return Err(Error::Data(format!(
                "variant {} selected {} features, fewer than {t} iterations",
                v.name,
                v.ranking.len()
            )));
        }
    }
    let diagonal = (((shape[0] - 1).pow(2) + (shape[1] - 1).pow(2)) as f64).sqrt().max(1.0);
    let coordinates: Vec<Vec<[usize; 2]>> = variants.iter().map(|v| v.coords(t)).collect();

    let mut iterations = Vec::with_capacity(t);
    for it in 1..=t {
        let mut points = Vec::new();
        let mut point_variant = Vec::new();
        for (vi, coords) in coordinates.iter().enumerate() {
            for c in &coords[..it] {
                points.push([c[0] as f64, c[1] as f64]);
                point_variant.push(vi);
            }
        }
        let km = kmeans(&points, it, crate::rng::derive(seed, &[it as u64]))?;
        let clusters: Vec<ClusterSummary> = (0..it)
            .map(|j| {
                let centroid = km.centroids[j];
                let mut members_per_variant = vec![0; variants.len()];
                let mut spread = 0.0;
                for ((p, &a), &v) in points.iter().zip(&km.assignments).zip(&point_variant) {
                    if a == j {
                        members_per_variant[v] += 1;
                        spread += ((p[0] - centroid[0]).powi(2) + (p[1] - centroid[1]).powi(2)).sqrt();
                    }
                }
                let n: usize = members_per_variant.iter().sum();
                ClusterSummary {
                    centroid,
                    members_per_variant,
                    radius: if n == 0 { 0.0 } else { spread / n as f64 },
                }
            })
            .collect();
        let filled: Vec<&ClusterSummary> =
            clusters.iter().filter(|c| c.members_per_variant.iter().any(|&m| m > 0)).collect();
        let agreement =
            filled.iter().map(|c| 1.0 - (c.radius / diagonal).min(1.0)).sum::<f64>() / filled.len() as f64;
        iterations.push(IterationClusters {
            iteration: it,
            cluster_count: it,
            points,
            point_variant,
            kmeans: km,
            clusters,
            agreement,
        });
    }
    Ok(StabilityReport {
        schema_version: 1,
        feature_shape: shape,
        variants: variants.iter().map(|v| v.name.clone()).collect(),
        coordinates,
        iterations,
    })
}

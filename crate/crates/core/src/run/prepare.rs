use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, DatasetSource};
use crate::data::{
    clean_series, downsample_dataset, generate_features, load_cifar_batch, load_csv, load_idx, load_series_csv,
    normalize, split_dataset, window_slice, Dataset, NormStats, SeriesLabels, Split,
};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const CACHE_MAGIC: &[u8] = b"IOSDS1\n";

fn load_source(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Idx { images, labels } => load_idx(images, labels),
        DatasetSource::Cifar { batches } => {
            let parts = batches.iter().map(|b| load_cifar_batch(b)).collect::<Result<Vec<_>>>()?;
            let first = parts.first().ok_or_else(|| Error::Config("no CIFAR batches listed".into()))?;
            let features = Tensor::concat_instances(&parts.iter().map(|d| &d.features).collect::<Vec<_>>())?;
            let labels = parts.iter().flat_map(|d| d.labels.iter().copied()).collect();
            Dataset::new(features, labels, first.class_count)
        }
        DatasetSource::Csv { path, schema } => load_csv(path, schema),
        DatasetSource::Series {
            path,
            schema,
            window,
            feature_generation,
            max_missing,
        } => {
            let (series, _) = clean_series(&load_series_csv(path, schema)?, *max_missing)?;
            let mut values = series.values.clone();
            let mut labels = series.labels.clone();
            let mut names = series.channel_names.clone();
            if let Some(fg) = feature_generation {
                values = generate_features(&values, fg)?;
                // Each descriptor row summarises the window ending at it.
                labels = labels.map(|l| l[fg.window_size - 1..].to_vec());
                names = fg.statistics.iter().map(|s| format!("{s:?}")).collect();
            }
            let class_count = series.class_names.len().max(1);
            let lab = match &labels {
                Some(l) => SeriesLabels::PerTimestep(l),
                None => SeriesLabels::Constant(0),
            };
            let mut ds = window_slice(&values, lab, class_count, window)?;
            ds.channel_names = Some(names);
            Ok(ds)
        }
    }
}

/// Load, truncate, reduce, split and normalise, in that order.
pub fn prepare_dataset(cfg: &DatasetConfig, seed: u64) -> Result<(Dataset, Option<NormStats>)> {
    let mut ds = load_source(&cfg.source)?;
    if let Some(n) = cfg.limit {
        if n < ds.instances() {
            ds = ds.select(&(0..n).collect::<Vec<_>>());
        }
    }
    if let Some(f) = cfg.downsample {
        ds = downsample_dataset(&ds, f)?;
    }
    ds = split_dataset(&ds, cfg.split, cfg.stratified, crate::rng::derive(seed, &[0x5911]))?;
    match cfg.normalization {
        Some(mode) => {
            let (ds, stats) = normalize(&ds, mode, cfg.per_channel)?;
            Ok((ds, Some(stats)))
        }
        None => Ok((ds, None)),
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    shape: Vec<usize>,
    labels: Vec<usize>,
    split: Vec<Split>,
    class_count: usize,
    channel_names: Option<Vec<String>>,
}

/// Binary cache: a magic line, a JSON header line, then the feature values
/// as little-endian `f64`. Written through a temporary file.
pub fn write_dataset_cache(ds: &Dataset, path: &Path) -> Result<()> {
    let header = CacheHeader {
        shape: ds.features.shape().to_vec(),
        labels: ds.labels.clone(),
        split: ds.split.clone(),
        class_count: ds.class_count,
        channel_names: ds.channel_names.clone(),
    };
    let mut bytes = CACHE_MAGIC.to_vec();
    serde_json::to_writer(&mut bytes, &header)?;
    bytes.push(b'\n');
    bytes.reserve(ds.features.len() * 8);
    for v in ds.features.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    super::write_atomic(path, &bytes)
}

pub fn read_dataset_cache(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let body = bytes
        .strip_prefix(CACHE_MAGIC)
        .ok_or_else(|| Error::load(path, Some(0), "not a dataset cache"))?;
    let nl = body
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::load(path, Some(CACHE_MAGIC.len() as u64), "truncated header"))?;
    let header: CacheHeader = serde_json::from_slice(&body[..nl])
        .map_err(|e| Error::load(path, Some(CACHE_MAGIC.len() as u64), e.to_string()))?;
    let raw = &body[nl + 1..];
    let offset = (CACHE_MAGIC.len() + nl + 1) as u64;
    let want: usize = header.shape.iter().product();
    if raw.len() != want * 8 {
        return Err(Error::load(path, Some(offset), format!("expected {} value bytes, found {}", want * 8, raw.len())));
    }
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut ds = Dataset::new(Tensor::new(header.shape, data)?, header.labels, header.class_count)?;
    if header.split.len() != ds.instances() {
        return Err(Error::load(path, Some(CACHE_MAGIC.len() as u64), "split tags do not match instances"));
    }
    ds.split = header.split;
    ds.channel_names = header.channel_names;
    Ok(ds)
}

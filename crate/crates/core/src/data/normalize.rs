use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    MinMax,
    Standard,
}

/// Affine constants `x' = (x - offset) / scale`, one pair per channel (or a
/// single pair when global). A zero scale maps the scope to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mode: NormMode,
    pub per_channel: bool,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn apply(&self, value: f64, channel: usize) -> f64 {
        let k = if self.per_channel { channel } else { 0 };
        if self.scale[k] == 0.0 {
            0.0
        } else {
            (value - self.offset[k]) / self.scale[k]
        }
    }
}

/// Normalises every split with statistics taken from the training split.
pub fn normalize(ds: &Dataset, mode: NormMode, per_channel: bool) -> Result<(Dataset, NormStats)> {
    let train = ds.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::Data("normalisation needs training instances".into()));
    }
    let ch = ds.channels();
    let scopes = if per_channel { ch } else { 1 };
    let scope = |i: usize| if per_channel { i % ch } else { 0 };

    let mut offset = vec![0.0; scopes];
    let mut scale = vec![0.0; scopes];
    match mode {
        NormMode::MinMax => {
            let mut lo = vec![f64::INFINITY; scopes];
            let mut hi = vec![f64::NEG_INFINITY; scopes];
            for &n in &train {
                for (i, &v) in ds.features.instance(n).iter().enumerate() {
                    let s = scope(i);
                    lo[s] = lo[s].min(v);
                    hi[s] = hi[s].max(v);
                }
            }
            for s in 0..scopes {
                offset[s] = lo[s];
                scale[s] = hi[s] - lo[s];
            }
        }
        NormMode::Standard => {
            let mut sum = vec![0.0; scopes];
            let mut count = vec![0usize; scopes];
            for &n in &train {
                for (i, &v) in ds.features.instance(n).iter().enumerate() {
                    sum[scope(i)] += v;
                    count[scope(i)] += 1;
                }
            }
            for s in 0..scopes {
                offset[s] = sum[s] / count[s] as f64;
            }
            let mut sq = vec![0.0; scopes];
            for &n in &train {
                for (i, &v) in ds.features.instance(n).iter().enumerate() {
                    let d = v - offset[scope(i)];
                    sq[scope(i)] += d * d;
                }
            }
            for s in 0..scopes {
                scale[s] = (sq[s] / count[s] as f64).sqrt();
            }
        }
    }
    let stats = NormStats {
        mode,
        per_channel,
        offset,
        scale,
    };
    let features = ds.features.map_indexed(|i, v| stats.apply(v, i % ch));
    Ok((ds.with_features(features)?, stats))
}

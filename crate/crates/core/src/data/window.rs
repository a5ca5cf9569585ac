use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub block_size: usize,
    /// Defaults to `block_size` (non-overlapping windows).
    #[serde(default)]
    pub stride: Option<usize>,
}

impl WindowConfig {
    pub fn blocks(block_size: usize) -> Self {
        Self {
            block_size,
            stride: None,
        }
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.block_size)
    }

    /// Window count for a series of length `len`.
    pub fn count(&self, len: usize) -> usize {
        if len < self.block_size {
            0
        } else {
            (len - self.block_size) / self.stride() + 1
        }
    }
}

/// How labels attach to a series before slicing.
#[derive(Clone, Copy, Debug)]
pub enum SeriesLabels<'a> {
    /// One label for the whole series.
    Constant(usize),
    /// A label per timestep; each window takes the majority, ties to the
    /// lowest class.
    PerTimestep(&'a [usize]),
}

/// Cuts a `(L, channels)` series into instances of shape `(b, channels)`.
pub fn window_slice(
    series: &Tensor,
    labels: SeriesLabels<'_>,
    class_count: usize,
    cfg: &WindowConfig,
) -> Result<Dataset> {
    if series.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "series must be (length, channels), got {:?}",
            series.shape()
        )));
    }
    let (len, ch) = (series.shape()[0], series.shape()[1]);
    let b = cfg.block_size;
    if b == 0 || cfg.stride() == 0 {
        return Err(Error::Config("block_size and stride must be positive".into()));
    }
    if len < b {
        return Err(Error::Data(format!("series of length {len} is shorter than block size {b}")));
    }
    if let SeriesLabels::PerTimestep(l) = labels {
        if l.len() != len {
            return Err(Error::Data(format!("{} labels for {len} timesteps", l.len())));
        }
    }
    let n = cfg.count(len);
    let mut data = Vec::with_capacity(n * b * ch);
    let mut out_labels = Vec::with_capacity(n);
    let mut votes = vec![0usize; class_count];
    for i in 0..n {
        let start = i * cfg.stride();
        data.extend_from_slice(&series.data()[start * ch..(start + b) * ch]);
        out_labels.push(match labels {
            SeriesLabels::Constant(c) => c,
            SeriesLabels::PerTimestep(l) => {
                votes.iter_mut().for_each(|v| *v = 0);
                for &c in &l[start..start + b] {
                    if c >= class_count {
                        return Err(Error::Data(format!("label {c} outside {class_count} classes")));
                    }
                    votes[c] += 1;
                }
                // max_by_key keeps the last maximum, so scan in reverse.
                (0..class_count).rev().max_by_key(|&c| votes[c]).unwrap()
            }
        });
    }
    Dataset::new(Tensor::new(vec![n, b, ch], data)?, out_labels, class_count)
}

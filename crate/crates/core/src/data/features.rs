use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Number of statistics a feature-generation config must name.
pub const STATISTIC_COUNT: usize = 30;

/// Descriptive statistics computed over one sliding window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Variance,
    Std,
    Min,
    Max,
    Range,
    Median,
    /// Median absolute deviation from the median.
    Mad,
    Skewness,
    /// Excess kurtosis.
    Kurtosis,
    Rms,
    Energy,
    ZeroCrossings,
    MeanCrossings,
    DiffMean,
    DiffStd,
    Diff2Mean,
    Diff2Std,
    Iqr,
    P10,
    P25,
    P75,
    P90,
    Autocorr1,
    Slope,
    Intercept,
    /// Natural-log entropy of a 10-bin histogram spanning the window range.
    HistEntropy,
    /// Strict interior local maxima.
    PeakCount,
    DiffPeakToPeak,
    /// Signal magnitude area, the mean absolute value.
    Sma,
}

impl Statistic {
    pub const ALL: [Statistic; STATISTIC_COUNT] = [
        Statistic::Mean,
        Statistic::Variance,
        Statistic::Std,
        Statistic::Min,
        Statistic::Max,
        Statistic::Range,
        Statistic::Median,
        Statistic::Mad,
        Statistic::Skewness,
        Statistic::Kurtosis,
        Statistic::Rms,
        Statistic::Energy,
        Statistic::ZeroCrossings,
        Statistic::MeanCrossings,
        Statistic::DiffMean,
        Statistic::DiffStd,
        Statistic::Diff2Mean,
        Statistic::Diff2Std,
        Statistic::Iqr,
        Statistic::P10,
        Statistic::P25,
        Statistic::P75,
        Statistic::P90,
        Statistic::Autocorr1,
        Statistic::Slope,
        Statistic::Intercept,
        Statistic::HistEntropy,
        Statistic::PeakCount,
        Statistic::DiffPeakToPeak,
        Statistic::Sma,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureGenConfig {
    pub window_size: usize,
    pub statistics: Vec<Statistic>,
}

impl Default for FeatureGenConfig {
    fn default() -> Self {
        Self {
            window_size: 64,
            statistics: Statistic::ALL.to_vec(),
        }
    }
}

impl FeatureGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 {
            return Err(Error::Config("window_size must be positive".into()));
        }
        if self.statistics.len() != STATISTIC_COUNT {
            return Err(Error::Config(format!(
                "expected {STATISTIC_COUNT} statistics, got {}",
                self.statistics.len()
            )));
        }
        Ok(())
    }
}

/// Slides a window over a `(L, 1)` series and emits one row of statistics per
/// position, giving `(L - window_size + 1, 30)`.
pub fn generate_features(series: &Tensor, cfg: &FeatureGenConfig) -> Result<Tensor> {
    cfg.validate()?;
    if series.shape().len() != 2 || series.shape()[1] != 1 {
        return Err(Error::Shape(format!("expected a (length, 1) series, got {:?}", series.shape())));
    }
    let v = series.data();
    let w = cfg.window_size;
    if w > v.len() {
        return Err(Error::Data(format!("window {w} is longer than the series ({})", v.len())));
    }
    let rows = v.len() - w + 1;
    let mut out = Vec::with_capacity(rows * STATISTIC_COUNT);
    for start in 0..rows {
        let s = WindowStats::new(&v[start..start + w]);
        out.extend(cfg.statistics.iter().map(|&st| s.get(st)));
    }
    Tensor::new(vec![rows, STATISTIC_COUNT], out)
}

struct WindowStats<'a> {
    v: &'a [f64],
    sorted: Vec<f64>,
    mean: f64,
    var: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn variance(v: &[f64], m: f64) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    }
}

fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|p| p[1] - p[0]).collect()
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl<'a> WindowStats<'a> {
    fn new(v: &'a [f64]) -> Self {
        let mut sorted = v.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mean = mean(v);
        let var = variance(v, mean);
        Self { v, sorted, mean, var }
    }

    fn moment(&self, p: i32) -> f64 {
        self.v.iter().map(|x| (x - self.mean).powi(p)).sum::<f64>() / self.v.len() as f64
    }

    fn get(&self, st: Statistic) -> f64 {
        let n = self.v.len() as f64;
        let min = self.sorted[0];
        let max = *self.sorted.last().unwrap();
        match st {
            Statistic::Mean => self.mean,
            Statistic::Variance => self.var,
            Statistic::Std => self.var.sqrt(),
            Statistic::Min => min,
            Statistic::Max => max,
            Statistic::Range => max - min,
            Statistic::Median => percentile(&self.sorted, 0.5),
            Statistic::Mad => {
                let med = percentile(&self.sorted, 0.5);
                let mut dev: Vec<f64> = self.v.iter().map(|x| (x - med).abs()).collect();
                dev.sort_by(|a, b| a.total_cmp(b));
                percentile(&dev, 0.5)
            }
            Statistic::Skewness => {
                if self.var == 0.0 {
                    0.0
                } else {
                    self.moment(3) / self.var.powf(1.5)
                }
            }
            Statistic::Kurtosis => {
                if self.var == 0.0 {
                    0.0
                } else {
                    self.moment(4) / (self.var * self.var) - 3.0
                }
            }
            Statistic::Rms => (self.get(Statistic::Energy) / n).sqrt(),
            Statistic::Energy => self.v.iter().map(|x| x * x).sum(),
            Statistic::ZeroCrossings => self.v.windows(2).filter(|p| p[0] * p[1] < 0.0).count() as f64,
            Statistic::MeanCrossings => self
                .v
                .windows(2)
                .filter(|p| (p[0] - self.mean) * (p[1] - self.mean) < 0.0)
                .count() as f64,
            Statistic::DiffMean => mean(&diff(self.v)),
            Statistic::DiffStd => {
                let d = diff(self.v);
                variance(&d, mean(&d)).sqrt()
            }
            Statistic::Diff2Mean => mean(&diff(&diff(self.v))),
            Statistic::Diff2Std => {
                let d = diff(&diff(self.v));
                variance(&d, mean(&d)).sqrt()
            }
            Statistic::Iqr => percentile(&self.sorted, 0.75) - percentile(&self.sorted, 0.25),
            Statistic::P10 => percentile(&self.sorted, 0.10),
            Statistic::P25 => percentile(&self.sorted, 0.25),
            Statistic::P75 => percentile(&self.sorted, 0.75),
            Statistic::P90 => percentile(&self.sorted, 0.90),
            Statistic::Autocorr1 => {
                let den: f64 = self.v.iter().map(|x| (x - self.mean).powi(2)).sum();
                if den == 0.0 {
                    0.0
                } else {
                    self.v
                        .windows(2)
                        .map(|p| (p[0] - self.mean) * (p[1] - self.mean))
                        .sum::<f64>()
                        / den
                }
            }
            Statistic::Slope | Statistic::Intercept => {
                let tm = (n - 1.0) / 2.0;
                let sxx: f64 = (0..self.v.len()).map(|t| (t as f64 - tm).powi(2)).sum();
                let slope = if sxx == 0.0 {
                    0.0
                } else {
                    self.v
                        .iter()
                        .enumerate()
                        .map(|(t, x)| (t as f64 - tm) * (x - self.mean))
                        .sum::<f64>()
                        / sxx
                };
                if st == Statistic::Slope {
                    slope
                } else {
                    self.mean - slope * tm
                }
            }
            Statistic::HistEntropy => {
                let range = max - min;
                if range == 0.0 {
                    return 0.0;
                }
                let mut bins = [0usize; 10];
                for x in self.v {
                    let b = (((x - min) / range) * 10.0).floor() as usize;
                    bins[b.min(9)] += 1;
                }
                bins.iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let p = c as f64 / n;
                        -p * p.ln()
                    })
                    .sum()
            }
            Statistic::PeakCount => self.v.windows(3).filter(|p| p[1] > p[0] && p[1] > p[2]).count() as f64,
            Statistic::DiffPeakToPeak => {
                let d = diff(self.v);
                if d.is_empty() {
                    0.0
                } else {
                    let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                }
            }
            Statistic::Sma => self.v.iter().map(|x| x.abs()).sum::<f64>() / n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn series(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    fn column(t: &Tensor, st: Statistic) -> Vec<f64> {
        let c = Statistic::ALL.iter().position(|s| *s == st).unwrap();
        (0..t.shape()[0]).map(|r| t.data()[r * STATISTIC_COUNT + c]).collect()
    }

    #[test]
    fn thirty_distinct_statistics() {
        let mut all = Statistic::ALL.to_vec();
        all.dedup();
        assert_eq!(all.len(), 30);
        assert!(FeatureGenConfig::default().validate().is_ok());
    }

    #[test]
    fn rolling_mean() {
        let cfg = FeatureGenConfig {
            window_size: 2,
            ..Default::default()
        };
        let out = generate_features(&series(&[1.0, 2.0, 3.0, 4.0]), &cfg).unwrap();
        assert_eq!(out.shape(), &[3, 30]);
        assert_eq!(column(&out, Statistic::Mean), vec![1.5, 2.5, 3.5]);
    }

    #[test]
    fn constant_series() {
        let cfg = FeatureGenConfig {
            window_size: 4,
            ..Default::default()
        };
        let out = generate_features(&series(&[2.5; 10]), &cfg).unwrap();
        assert!(column(&out, Statistic::Mean).iter().all(|&m| m == 2.5));
        assert!(column(&out, Statistic::Variance).iter().all(|&m| m == 0.0));
        assert!(column(&out, Statistic::Range).iter().all(|&m| m == 0.0));
        assert!(out.is_finite());
    }

    #[test]
    fn window_longer_than_series() {
        let cfg = FeatureGenConfig {
            window_size: 5,
            ..Default::default()
        };
        assert!(generate_features(&series(&[1.0; 4]), &cfg).is_err());
    }

    #[test]
    fn variance_matches_two_pass() {
        let mut rng = crate::rng::stream(3);
        let v: Vec<f64> = (0..300).map(|_| rng.random_range(-5.0..5.0)).collect();
        let cfg = FeatureGenConfig {
            window_size: 17,
            ..Default::default()
        };
        let out = generate_features(&series(&v), &cfg).unwrap();
        for (i, got) in column(&out, Statistic::Variance).into_iter().enumerate() {
            let w = &v[i..i + 17];
            let mut s = 0.0;
            for x in w {
                s += x;
            }
            let m = s / 17.0;
            let mut ss = 0.0;
            for x in w {
                ss += (x - m) * (x - m);
            }
            assert!((got - ss / 17.0).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_fit_and_shape_stats() {
        let cfg = FeatureGenConfig {
            window_size: 5,
            ..Default::default()
        };
        let out = generate_features(&series(&[1.0, 3.0, 5.0, 7.0, 9.0]), &cfg).unwrap();
        assert!((column(&out, Statistic::Slope)[0] - 2.0).abs() < 1e-12);
        assert!((column(&out, Statistic::Intercept)[0] - 1.0).abs() < 1e-12);
        assert_eq!(column(&out, Statistic::Median)[0], 5.0);
        assert_eq!(column(&out, Statistic::Iqr)[0], 4.0);
        let peaks = generate_features(&series(&[0.0, 1.0, 0.0, 2.0, 0.0]), &cfg).unwrap();
        assert_eq!(column(&peaks, Statistic::PeakCount)[0], 2.0);
    }
}

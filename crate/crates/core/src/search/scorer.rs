use serde::{Deserialize, Serialize};

use crate::autoencoder::{train_io_on, IOArch, IOAutoencoder, IOConfig, MaskLayout};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{Tensor, TrainConfig};

/// Reconstruction cost of one input/output configuration; lower is better.
pub trait CandidateScorer: Sync {
    fn score(&self, ds: &Dataset, io: &IOConfig, seed: u64) -> Result<f64>;
}

/// Trains an IO autoencoder from scratch and returns its validation cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralScorer {
    pub arch: IOArch,
    pub train: TrainConfig,
    /// Score with only the first `n` training instances.
    pub train_subset: Option<usize>,
}

impl CandidateScorer for NeuralScorer {
    fn score(&self, ds: &Dataset, io: &IOConfig, seed: u64) -> Result<f64> {
        let mut train_idx = ds.indices(Split::Train);
        if let Some(n) = self.train_subset {
            train_idx.truncate(n.max(1));
        }
        let train_x = ds.features.select(&train_idx);
        let (val_x, _) = ds.part(Split::Val);
        let ae = IOAutoencoder::new(ds.feature_shape(), io.clone(), self.arch.clone(), seed)?;
        let (_, report, _) = train_io_on(ae, &train_x, &val_x, &self.train.with_seed(seed))?;
        Ok(report.total_rmse)
    }
}

/// Closed-form least-squares linear decoder (with intercept) from the `x_in`
/// values to the `x_out` values, fitted on Train and scored on Val.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    /// Added to the diagonal of the normal equations.
    pub ridge: f64,
}

impl CandidateScorer for LinearScorer {
    fn score(&self, ds: &Dataset, io: &IOConfig, _seed: u64) -> Result<f64> {
        let shape = ds.feature_shape();
        let layout = MaskLayout::infer(shape);
        let w_in = io.x_in.weights(shape, layout)?;
        let w_out = io.x_out.weights(shape, layout)?;
        let ins: Vec<usize> = (0..w_in.len()).filter(|&i| w_in[i] != 0.0).collect();
        let outs: Vec<usize> = (0..w_out.len()).filter(|&i| w_out[i] != 0.0).collect();
        if outs.is_empty() {
            return Err(Error::EmptyOutput);
        }
        let (train_x, _) = ds.part(Split::Train);
        let (val_x, _) = ds.part(Split::Val);
        let coef = fit_linear(&train_x, &ins, &outs, self.ridge)?;
        let mut ss = 0.0;
        for n in 0..val_x.instances() {
            let row = val_x.instance(n);
            for (j, &o) in outs.iter().enumerate() {
                let mut y = coef[ins.len() * outs.len() + j];
                for (i, &f) in ins.iter().enumerate() {
                    y += row[f] * coef[i * outs.len() + j];
                }
                let d = y - row[o];
                ss += d * d;
            }
        }
        Ok((ss / (val_x.instances() * outs.len()) as f64).sqrt())
    }
}

/// Coefficients laid out as `(ins + 1) × outs`, the intercept row last.
fn fit_linear(x: &Tensor, ins: &[usize], outs: &[usize], ridge: f64) -> Result<Vec<f64>> {
    let p = ins.len() + 1;
    let q = outs.len();
    let mut ata = vec![0.0; p * p];
    let mut aty = vec![0.0; p * q];
    let mut a = vec![0.0; p];
    for n in 0..x.instances() {
        let row = x.instance(n);
        for (i, &f) in ins.iter().enumerate() {
            a[i] = row[f];
        }
        a[p - 1] = 1.0;
        for i in 0..p {
            for j in 0..p {
                ata[i * p + j] += a[i] * a[j];
            }
            for (j, &o) in outs.iter().enumerate() {
                aty[i * q + j] += a[i] * row[o];
            }
        }
    }
    for i in 0..p {
        ata[i * p + i] += ridge;
    }
    let l = cholesky(&ata, p)?;
    // Solve L Lᵀ B = Aᵀy column by column.
    let mut coef = vec![0.0; p * q];
    let mut z = vec![0.0; p];
    for j in 0..q {
        for i in 0..p {
            let mut s = aty[i * q + j];
            for k in 0..i {
                s -= l[i * p + k] * z[k];
            }
            z[i] = s / l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = z[i];
            for k in i + 1..p {
                s -= l[k * p + i] * coef[k * q + j];
            }
            coef[i * q + j] = s / l[i * p + i];
        }
    }
    Ok(coef)
}

fn cholesky(m: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = m[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Data("linear decoder design matrix is singular".into()));
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Ok(l)
}

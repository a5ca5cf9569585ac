//! Masked encoder-decoder: the encoder sees only `x_in` (other positions are
//! zero-filled) and the decoder is scored only on `x_out`.

mod mask;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{self, LayerSpec, Network, Samples, Target, Tensor, TrainConfig, TrainHistory};

pub use mask::{apply_mask, swap_direction, Direction, FeatureMask, IOConfig, MaskLayout};

/// Widths of the two encoder convolutions; the decoder mirrors them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IOArch {
    pub kernel_counts: [usize; 2],
    /// 3 (as 3×3) for images and 4 for series when unset.
    pub kernel_size: Option<usize>,
    pub pool_factor: usize,
}

impl Default for IOArch {
    fn default() -> Self {
        Self {
            kernel_counts: [8, 4],
            kernel_size: None,
            pool_factor: nn::DEFAULT_POOL_FACTOR,
        }
    }
}

impl IOArch {
    /// Encoder and decoder layer lists for instances of `shape`.
    pub fn layers(&self, shape: &[usize]) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
        let [k1, k2] = self.kernel_counts;
        let ch = *shape.last().ok_or_else(|| Error::Shape("empty instance shape".into()))?;
        let pool = LayerSpec::MaxPool {
            pool_factor: self.pool_factor,
        };
        let up = LayerSpec::Upsample {
            pool_factor: self.pool_factor,
            output_size: Some(shape[..shape.len() - 1].to_vec()),
        };
        match shape.len() {
            3 => {
                let k = self.kernel_size.unwrap_or(3);
                let conv = |n| LayerSpec::Conv2D {
                    kernel_size: [k, k],
                    kernel_count: n,
                };
                let tconv = |n| LayerSpec::TransposedConv2D {
                    kernel_size: [k, k],
                    kernel_count: n,
                };
                Ok((
                    vec![conv(k1), LayerSpec::ReLU, pool, conv(k2), LayerSpec::ReLU],
                    vec![up, tconv(k1), LayerSpec::ReLU, tconv(ch)],
                ))
            }
            2 => {
                let k = self.kernel_size.unwrap_or(4);
                let conv = |n| LayerSpec::Conv1D {
                    kernel_size: k,
                    kernel_count: n,
                };
                let tconv = |n| LayerSpec::TransposedConv1D {
                    kernel_size: k,
                    kernel_count: n,
                };
                Ok((
                    vec![conv(k1), LayerSpec::ReLU, pool, conv(k2), LayerSpec::ReLU],
                    vec![up, tconv(k1), LayerSpec::ReLU, tconv(ch)],
                ))
            }
            _ => Err(Error::Shape(format!(
                "autoencoder needs (len, ch) or (h, w, ch) instances, got {shape:?}"
            ))),
        }
    }
}

/// Encoder `f` and decoder `g` held as one network whose first
/// `encoder_layers` layers form `f`.
#[derive(Clone, Debug)]
pub struct IOAutoencoder {
    net: Network,
    encoder_layers: usize,
    io: IOConfig,
    layout: MaskLayout,
    arch: IOArch,
    trained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// RMSE over the `x_out` values of the scored split.
    pub total_rmse: f64,
    /// RMSE per position; `None` for positions outside `x_out`.
    pub per_feature_rmse: Vec<Option<f64>>,
    pub epochs_trained: usize,
}

impl IOAutoencoder {
    pub fn new(instance_shape: &[usize], io: IOConfig, arch: IOArch, seed: u64) -> Result<Self> {
        let (enc, dec) = arch.layers(instance_shape)?;
        Self::with_layers(instance_shape, io, arch, enc, dec, seed)
    }

    /// Custom encoder and decoder; the decoder must restore `instance_shape`.
    pub fn with_layers(
        instance_shape: &[usize],
        io: IOConfig,
        arch: IOArch,
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Self> {
        io.validate()?;
        let layout = MaskLayout::infer(instance_shape);
        io.x_in.check(instance_shape, layout)?;
        let encoder_layers = encoder.len();
        let layers: Vec<LayerSpec> = encoder.into_iter().chain(decoder).collect();
        let net = Network::build(instance_shape, layers, seed)?;
        if net.output_shape() != instance_shape {
            return Err(Error::Shape(format!(
                "decoder output {:?} differs from input {instance_shape:?}",
                net.output_shape()
            )));
        }
        Ok(Self {
            net,
            encoder_layers,
            io,
            layout,
            arch,
            trained: false,
        })
    }

    pub fn io(&self) -> &IOConfig {
        &self.io
    }

    pub fn arch(&self) -> &IOArch {
        &self.arch
    }

    pub fn layout(&self) -> MaskLayout {
        self.layout
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn encoder_layers(&self) -> &[LayerSpec] {
        &self.net.layers()[..self.encoder_layers]
    }

    pub fn decoder_layers(&self) -> &[LayerSpec] {
        &self.net.layers()[self.encoder_layers..]
    }

    /// Installs externally obtained parameters and marks the model trained.
    pub fn load_parameters(&mut self, params: Vec<f64>) -> Result<()> {
        self.net.set_params(params)?;
        self.trained = true;
        Ok(())
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    fn out_weights(&self) -> Result<Vec<f64>> {
        self.io.x_out.weights(self.net.input_shape(), self.layout)
    }

    /// Full-shape reconstruction `g(f(apply_mask(x, x_in)))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.forward_masked(x)
    }

    fn forward_masked(&self, x: &Tensor) -> Result<Tensor> {
        if x.instance_shape() != self.net.input_shape() {
            return Err(Error::Shape(format!(
                "expected instances of shape {:?}, got {:?}",
                self.net.input_shape(),
                x.instance_shape()
            )));
        }
        self.net.forward(&apply_mask(x, &self.io.x_in)?)
    }

    /// RMSE of the reconstruction restricted to `x_out`, over one split.
    pub fn reconstruction_cost(&self, ds: &Dataset, split: Split) -> Result<f64> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let (x, _) = ds.part(split);
        self.cost_on(&x)
    }

    fn cost_on(&self, x: &Tensor) -> Result<f64> {
        let w = self.out_weights()?;
        self.net.evaluate_loss(
            &apply_mask(x, &self.io.x_in)?,
            Target::Values {
                values: x,
                weights: Some(&w),
            },
            nn::LossKind::Rmse,
        )
    }

    fn report(&self, x: &Tensor, epochs: usize) -> Result<ReconstructionReport> {
        let recon = self.forward_masked(x)?;
        let shape = self.net.input_shape();
        let count = self.io.x_out.feature_count();
        let mut sums = vec![0.0; count];
        let mut hits = vec![0usize; count];
        let per = x.instance_len();
        for (i, (y, t)) in recon.data().iter().zip(x.data()).enumerate() {
            let p = self.layout.position(shape, i % per);
            sums[p] += (y - t) * (y - t);
            hits[p] += 1;
        }
        let per_feature_rmse = (0..count)
            .map(|p| self.io.x_out.contains(p).then(|| (sums[p] / hits[p] as f64).sqrt()))
            .collect();
        Ok(ReconstructionReport {
            total_rmse: self.cost_on(x)?,
            per_feature_rmse,
            epochs_trained: epochs,
        })
    }
}

/// Trains on the Train split with validation-based early stopping and reports
/// reconstruction quality on the Val split.
pub fn train_io(ae: IOAutoencoder, ds: &Dataset, cfg: &TrainConfig) -> Result<(IOAutoencoder, ReconstructionReport, TrainHistory)> {
    let (train_x, _) = ds.part(Split::Train);
    let (val_x, _) = ds.part(Split::Val);
    train_io_on(ae, &train_x, &val_x, cfg)
}

/// [`train_io`] on explicit train and validation tensors.
pub fn train_io_on(
    mut ae: IOAutoencoder,
    train_x: &Tensor,
    val_x: &Tensor,
    cfg: &TrainConfig,
) -> Result<(IOAutoencoder, ReconstructionReport, TrainHistory)> {
    ae.io.validate()?;
    if cfg.loss != nn::LossKind::Rmse {
        return Err(Error::Config("the autoencoder trains with RMSE loss".into()));
    }
    let w = ae.out_weights()?;
    let train_in = apply_mask(train_x, &ae.io.x_in)?;
    let val_in = apply_mask(val_x, &ae.io.x_in)?;
    let target = |values| Target::Values {
        values,
        weights: Some(&w),
    };
    let (net, history) = nn::train(
        ae.net,
        Samples::new(&train_in, target(train_x)),
        Samples::new(&val_in, target(val_x)),
        cfg,
    )?;
    ae.net = net;
    ae.trained = true;
    let report = ae.report(val_x, history.epochs())?;
    Ok((ae, report, history))
}

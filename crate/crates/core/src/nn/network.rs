use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Graph, LayerSpec};
use super::loss::{self, LossKind, Target};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Instances per forward chunk when scoring whole splits.
const EVAL_CHUNK: usize = 256;

/// Sequential network with all parameters in one flat buffer.
#[derive(Clone, Debug)]
pub struct Network {
    graph: Graph,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
    seed: u64,
}

/// JSON architecture descriptor written next to the flat parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub schema_version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
    pub param_count: usize,
}

impl Network {
    /// Builds and initialises a network; identical arguments give
    /// bit-identical parameters.
    pub fn build(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let graph = Graph::build(input_shape, &layers)?;
        let mut params = vec![0.0; graph.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        graph.init_params(&mut rng, &mut params);
        Ok(Self {
            graph,
            layers,
            params,
            seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        self.graph.input_shape()
    }

    pub fn output_shape(&self) -> &[usize] {
        self.graph.output_shape()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "network has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let n = input.instances();
        if n <= EVAL_CHUNK {
            return self.forward_batch(input.clone());
        }
        let mut parts = Vec::new();
        let mut start = 0;
        while start < n {
            let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
            parts.push(self.forward_batch(input.select(&idx))?);
            start += EVAL_CHUNK;
        }
        Tensor::concat_instances(&parts.iter().collect::<Vec<_>>())
    }

    fn forward_batch(&self, input: Tensor) -> Result<Tensor> {
        let out = self.graph.forward(&self.params, input)?.into_output();
        out.ensure_finite("forward pass")?;
        Ok(out)
    }

    /// Loss and gradient of every parameter for one batch.
    pub fn backward(&self, input: &Tensor, target: Target<'_>, kind: LossKind) -> Result<(f64, Vec<f64>)> {
        self.backward_owned(input.clone(), target, kind)
    }

    pub(crate) fn backward_owned(&self, input: Tensor, target: Target<'_>, kind: LossKind) -> Result<(f64, Vec<f64>)> {
        if target.instances() != input.instances() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                input.instances(),
                target.instances()
            )));
        }
        let trace = self.graph.forward(&self.params, input)?;
        let out = trace.output();
        out.ensure_finite("forward pass")?;
        let mut grads = vec![0.0; self.params.len()];
        let loss = match (kind, target) {
            (LossKind::Rmse, Target::Values { values, weights }) => {
                if values.shape() != out.shape() {
                    return Err(Error::Shape(format!(
                        "target {:?} does not match output {:?}",
                        values.shape(),
                        out.shape()
                    )));
                }
                if let Some(w) = weights {
                    if w.len() != out.instance_len() {
                        return Err(Error::Shape("weight mask length differs from output instance".into()));
                    }
                }
                let (l, g) = loss::rmse_with_grad(out.data(), values.data(), weights);
                let dy = Tensor::new(out.shape().to_vec(), g)?;
                self.graph.backward(&self.params, &trace, dy, &mut grads);
                l
            }
            (LossKind::CrossEntropy, Target::Labels(labels)) => {
                check_labels(labels, out.instance_len())?;
                let l = loss::cross_entropy(out.data(), labels).value(kind);
                if self.graph.last_is_softmax() {
                    let g = loss::softmax_cross_entropy_grad(out.data(), labels);
                    let dy = Tensor::new(out.shape().to_vec(), g)?;
                    self.graph
                        .backward_from(self.graph.len() - 1, &self.params, &trace, dy, &mut grads);
                } else {
                    let g = loss::cross_entropy_grad(out.data(), labels);
                    let dy = Tensor::new(out.shape().to_vec(), g)?;
                    self.graph.backward(&self.params, &trace, dy, &mut grads);
                }
                l
            }
            (k, _) => return Err(Error::Config(format!("loss {k:?} does not fit the supplied target"))),
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((loss, grads))
    }

    /// Gradient of `sum(output * upstream)` w.r.t. the input, ignoring
    /// parameter gradients. Used by gradient checks and saliency code.
    pub fn input_gradient(&self, input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
        let trace = self.graph.forward(&self.params, input.clone())?;
        if upstream.shape() != trace.output().shape() {
            return Err(Error::Shape("upstream gradient does not match output".into()));
        }
        let mut scratch = vec![0.0; self.params.len()];
        Ok(self.graph.backward(&self.params, &trace, upstream.clone(), &mut scratch))
    }

    /// Loss over a whole split, accumulated in chunks.
    pub fn evaluate_loss(&self, inputs: &Tensor, target: Target<'_>, kind: LossKind) -> Result<f64> {
        let n = inputs.instances();
        if n == 0 {
            return Err(Error::Data("cannot score an empty split".into()));
        }
        let mut total = loss::LossSum::default();
        let mut start = 0;
        while start < n {
            let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
            let out = self.forward_batch(inputs.select(&idx))?;
            let part = match (kind, target) {
                (LossKind::Rmse, Target::Values { values, weights }) => {
                    let t = values.select(&idx);
                    if t.shape() != out.shape() {
                        return Err(Error::Shape("target does not match output".into()));
                    }
                    loss::squared_error(out.data(), t.data(), weights)
                }
                (LossKind::CrossEntropy, Target::Labels(labels)) => {
                    let l = &labels[start..start + idx.len()];
                    check_labels(l, out.instance_len())?;
                    loss::cross_entropy(out.data(), l)
                }
                (k, _) => return Err(Error::Config(format!("loss {k:?} does not fit the supplied target"))),
            };
            total = total.merge(part);
            start += EVAL_CHUNK;
        }
        Ok(total.value(kind))
    }

    pub fn descriptor(&self) -> ArchDescriptor {
        ArchDescriptor {
            schema_version: 1,
            input_shape: self.input_shape().to_vec(),
            layers: self.layers.clone(),
            seed: self.seed,
            param_count: self.params.len(),
        }
    }

    /// Writes `<stem>.json` (architecture) and `<stem>.params` (little-endian
    /// f64 values) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.descriptor())?;
        let jp = dir.join(format!("{stem}.json"));
        fs::write(&jp, json).map_err(|e| Error::io(&jp, e))?;
        let bytes: Vec<u8> = self.params.iter().flat_map(|p| p.to_le_bytes()).collect();
        let pp = dir.join(format!("{stem}.params"));
        fs::write(&pp, bytes).map_err(|e| Error::io(&pp, e))?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let jp = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&jp).map_err(|e| Error::io(&jp, e))?;
        let desc: ArchDescriptor = serde_json::from_str(&text)?;
        let mut net = Network::build(&desc.input_shape, desc.layers, desc.seed)?;
        let pp = dir.join(format!("{stem}.params"));
        let bytes = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
        if bytes.len() != desc.param_count * 8 || desc.param_count != net.params.len() {
            return Err(Error::load(&pp, None, "parameter file length does not match descriptor"));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        net.set_params(params)?;
        Ok(net)
    }
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(l) => Err(Error::Data(format!("label {l} outside {classes} classes"))),
        None => Ok(()),
    }
}

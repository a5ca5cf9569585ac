use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// The leading dimension is the instance (batch) axis and may be zero; every
/// other dimension must be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Shape("tensor needs at least one dimension".into()));
        }
        if shape[1..].contains(&0) {
            return Err(Error::Shape(format!("non-leading dimensions must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of instances along the leading axis.
    pub fn instances(&self) -> usize {
        self.shape[0]
    }

    /// Per-instance shape (everything after the leading axis).
    pub fn instance_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    /// Number of values in one instance.
    pub fn instance_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        let n = self.instance_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn instance_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.instance_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Copies the listed instances, in order, into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Tensor {
        let n = self.instance_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.instance(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor { shape, data }
    }

    /// Stacks same-shaped instance tensors along the leading axis.
    pub fn concat_instances(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let inner = first.instance_shape().to_vec();
        let mut data = Vec::new();
        let mut count = 0;
        for p in parts {
            if p.instance_shape() != inner.as_slice() {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} onto {:?}",
                    p.instance_shape(),
                    inner
                )));
            }
            data.extend_from_slice(&p.data);
            count += p.instances();
        }
        let mut shape = vec![count];
        shape.extend(inner);
        Ok(Tensor { shape, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Maps every value together with its flat index.
    pub fn map_indexed(&self, f: impl Fn(usize, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

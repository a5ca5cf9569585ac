use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// How mask positions map onto the values of one instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskLayout {
    /// One position per stored value (row, col, channel).
    Coordinates,
    /// One position per channel of a `(len, channels)` series; a selected
    /// channel keeps every timestep.
    Channels,
}

impl MaskLayout {
    /// Images and single-channel vectors use coordinates; multi-channel series
    /// use channels.
    pub fn infer(instance_shape: &[usize]) -> MaskLayout {
        match instance_shape {
            [_, c] if *c > 1 => MaskLayout::Channels,
            _ => MaskLayout::Coordinates,
        }
    }

    pub fn feature_count(self, instance_shape: &[usize]) -> usize {
        match self {
            MaskLayout::Coordinates => instance_shape.iter().product(),
            MaskLayout::Channels => *instance_shape.last().unwrap_or(&0),
        }
    }

    /// Position owning flat value `i` of an instance.
    pub fn position(self, instance_shape: &[usize], i: usize) -> usize {
        match self {
            MaskLayout::Coordinates => i,
            MaskLayout::Channels => i % instance_shape.last().unwrap(),
        }
    }
}

/// A set of feature positions out of `feature_count`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    bits: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    feature_count: usize,
    positions: Vec<usize>,
}

impl Serialize for FeatureMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MaskRepr {
            feature_count: self.feature_count(),
            positions: self.positions(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MaskRepr::deserialize(d)?;
        FeatureMask::from_positions(r.feature_count, &r.positions).map_err(serde::de::Error::custom)
    }
}

impl FeatureMask {
    pub fn empty(feature_count: usize) -> Self {
        Self {
            bits: vec![false; feature_count],
        }
    }

    pub fn full(feature_count: usize) -> Self {
        Self {
            bits: vec![true; feature_count],
        }
    }

    pub fn from_positions(feature_count: usize, positions: &[usize]) -> Result<Self> {
        let mut m = Self::empty(feature_count);
        for &p in positions {
            m.insert(p)?;
        }
        Ok(m)
    }

    pub fn feature_count(&self) -> usize {
        self.bits.len()
    }

    /// Number of selected positions.
    pub fn cardinality(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }

    pub fn is_full(&self) -> bool {
        !self.bits.contains(&false)
    }

    pub fn contains(&self, p: usize) -> bool {
        self.bits.get(p).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, p: usize) -> Result<()> {
        let n = self.bits.len();
        *self
            .bits
            .get_mut(p)
            .ok_or_else(|| Error::Shape(format!("position {p} outside {n} features")))? = true;
        Ok(())
    }

    pub fn with(&self, p: usize) -> Result<Self> {
        let mut m = self.clone();
        m.insert(p)?;
        Ok(m)
    }

    /// Selected positions in ascending order.
    pub fn positions(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Per-value 0/1 weights for one instance of `instance_shape`.
    pub fn weights(&self, instance_shape: &[usize], layout: MaskLayout) -> Result<Vec<f64>> {
        self.check(instance_shape, layout)?;
        let n: usize = instance_shape.iter().product();
        Ok((0..n)
            .map(|i| if self.bits[layout.position(instance_shape, i)] { 1.0 } else { 0.0 })
            .collect())
    }

    pub(crate) fn check(&self, instance_shape: &[usize], layout: MaskLayout) -> Result<()> {
        let want = layout.feature_count(instance_shape);
        if want != self.feature_count() {
            return Err(Error::Shape(format!(
                "mask over {} features does not fit instances of shape {instance_shape:?} ({want} features)",
                self.feature_count()
            )));
        }
        Ok(())
    }

    /// Binary PGM (P5) of an `h × w` mask, selected = 255. With several
    /// channels, a pixel is white when any of its channels is selected.
    pub fn to_pgm(&self, h: usize, w: usize) -> Result<Vec<u8>> {
        if h == 0 || w == 0 || !self.feature_count().is_multiple_of(h * w) {
            return Err(Error::Shape(format!(
                "{} features do not tile a {h}x{w} image",
                self.feature_count()
            )));
        }
        let c = self.feature_count() / (h * w);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for px in 0..h * w {
            let on = (0..c).any(|ch| self.bits[px * c + ch]);
            out.push(if on { 255 } else { 0 });
        }
        Ok(out)
    }
}

/// Zero-fills every value whose position is not in `mask`.
pub fn apply_mask(x: &Tensor, mask: &FeatureMask) -> Result<Tensor> {
    let shape = x.instance_shape();
    let layout = MaskLayout::infer(shape);
    let w = mask.weights(shape, layout)?;
    Ok(x.map_indexed(|i, v| if w[i % w.len()] == 0.0 { 0.0 } else { v }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    InputSearch,
    OutputSearch,
}

impl Direction {
    pub fn flipped(self) -> Direction {
        match self {
            Direction::InputSearch => Direction::OutputSearch,
            Direction::OutputSearch => Direction::InputSearch,
        }
    }
}

/// Which positions feed the encoder and which the decoder is scored on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IOConfig {
    pub x_in: FeatureMask,
    pub x_out: FeatureMask,
    pub direction: Direction,
}

impl IOConfig {
    /// `x_in` given; `x_out` is its complement.
    pub fn input_search(x_in: FeatureMask) -> Self {
        let x_out = x_in.complement();
        Self {
            x_in,
            x_out,
            direction: Direction::InputSearch,
        }
    }

    /// Every position on both sides: the ordinary autoencoder.
    pub fn standard(feature_count: usize) -> Self {
        Self {
            x_in: FeatureMask::full(feature_count),
            x_out: FeatureMask::full(feature_count),
            direction: Direction::InputSearch,
        }
    }

    /// The two masks must partition the positions, except for the
    /// all-in/all-out configuration.
    pub fn validate(&self) -> Result<()> {
        let n = self.x_in.feature_count();
        if self.x_out.feature_count() != n {
            return Err(Error::Config("x_in and x_out cover different feature counts".into()));
        }
        if self.x_out.is_empty() {
            return Err(Error::EmptyOutput);
        }
        if self.x_in.is_full() && self.x_out.is_full() {
            return Ok(());
        }
        for p in 0..n {
            if self.x_in.contains(p) == self.x_out.contains(p) {
                return Err(Error::Config(format!(
                    "position {p} must be in exactly one of x_in and x_out"
                )));
            }
        }
        Ok(())
    }
}

/// Exchanges the input and output sets and flips the direction flag.
pub fn swap_direction(io: &IOConfig) -> IOConfig {
    IOConfig {
        x_in: io.x_out.clone(),
        x_out: io.x_in.clone(),
        direction: io.direction.flipped(),
    }
}

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    /// Photon noise at an 8-bit scale: `Poisson(255 v) / 255`.
    Poisson,
    /// Each pixel is replaced by 0 or 1 with probability `amount`.
    SaltPepper { amount: f64 },
    MotionBlur {
        #[serde(default = "default_blur_length")]
        kernel_length: usize,
        #[serde(default)]
        angle: f64,
    },
}

fn default_blur_length() -> usize {
    9
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::Poisson => "poisson",
            NoiseKind::SaltPepper { .. } => "salt_pepper",
            NoiseKind::MotionBlur { .. } => "motion_blur",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = match self.kind {
            NoiseKind::Gaussian { sigma } => !(sigma.is_finite() && sigma >= 0.0),
            NoiseKind::Poisson => false,
            NoiseKind::SaltPepper { amount } => !(0.0..=1.0).contains(&amount),
            NoiseKind::MotionBlur { kernel_length, angle } => kernel_length == 0 || !angle.is_finite(),
        };
        if bad {
            Err(Error::Config(format!("invalid noise parameters {:?}", self.kind)))
        } else {
            Ok(())
        }
    }
}

/// Corrupts images of shape `(n, h, w, c)` or `(n, len, c)` with values in
/// [0, 1]. The result is clipped to [0, 1] and depends only on the input and
/// the spec.
pub fn add_noise(images: &Tensor, spec: &NoiseSpec) -> Result<Tensor> {
    spec.validate()?;
    if images.shape().len() < 3 || images.shape().len() > 4 {
        return Err(Error::Shape(format!(
            "noise expects (n, h, w, c) or (n, len, c), got {:?}",
            images.shape()
        )));
    }
    if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Data("noise input must lie in [0, 1]".into()));
    }
    let mut rng = rng::stream(rng::derive(spec.seed, &[0x0153]));
    let clip = |v: f64| v.clamp(0.0, 1.0);
    Ok(match spec.kind {
        NoiseKind::Gaussian { sigma } => {
            if sigma == 0.0 {
                return Ok(images.clone());
            }
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            let data = images.data().iter().map(|&v| clip(v + normal.sample(&mut rng))).collect();
            Tensor::new(images.shape().to_vec(), data)?
        }
        NoiseKind::Poisson => {
            let mut data = Vec::with_capacity(images.len());
            for &v in images.data() {
                let lambda = v * 255.0;
                let k = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                };
                data.push(clip(k / 255.0));
            }
            Tensor::new(images.shape().to_vec(), data)?
        }
        NoiseKind::SaltPepper { amount } => {
            let ch = *images.shape().last().unwrap();
            let mut out = images.clone();
            for pixel in out.data_mut().chunks_mut(ch) {
                if rng.random_bool(amount) {
                    let value = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                    pixel.iter_mut().for_each(|v| *v = value);
                }
            }
            out
        }
        NoiseKind::MotionBlur { kernel_length, angle } => motion_blur(images, kernel_length, angle)?,
    })
}

/// Line kernel through the centre of a `len × len` grid, normalised to sum 1.
fn line_kernel(len: usize, angle: f64) -> Vec<(isize, isize, f64)> {
    let (s, c) = angle.to_radians().sin_cos();
    let half = (len as f64 - 1.0) / 2.0;
    let mut taps: Vec<(isize, isize)> = Vec::new();
    for i in 0..len {
        let t = i as f64 - half;
        let dx = (t * c).round() as isize;
        let dy = (-t * s).round() as isize;
        if !taps.contains(&(dy, dx)) {
            taps.push((dy, dx));
        }
    }
    let w = 1.0 / taps.len() as f64;
    taps.into_iter().map(|(dy, dx)| (dy, dx, w)).collect()
}

fn motion_blur(images: &Tensor, len: usize, angle: f64) -> Result<Tensor> {
    let shape = images.shape();
    let (h, w, ch) = if shape.len() == 4 {
        (shape[1], shape[2], shape[3])
    } else {
        (1, shape[1], shape[2])
    };
    let kernel = line_kernel(len, angle);
    let mut out = Tensor::zeros(shape.to_vec());
    for n in 0..images.instances() {
        let src = images.instance(n);
        let dst = out.instance_mut(n);
        for y in 0..h as isize {
            for x in 0..w as isize {
                for &(dy, dx, k) in &kernel {
                    let (sy, sx) = (y + dy, x + dx);
                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                        continue;
                    }
                    let s = (sy as usize * w + sx as usize) * ch;
                    let d = (y as usize * w + x as usize) * ch;
                    for c in 0..ch {
                        dst[d + c] += k * src[s + c];
                    }
                }
            }
        }
    }
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grey(n: usize, side: usize, value: f64) -> Tensor {
        Tensor::filled(vec![n, side, side, 1], value)
    }

    fn spec(kind: NoiseKind, seed: u64) -> NoiseSpec {
        NoiseSpec { kind, seed }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let mut img = grey(2, 5, 0.0);
        img.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f64 / 7.0);
        let out = add_noise(&img, &spec(NoiseKind::Gaussian { sigma: 0.0 }, 4)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn salt_pepper_fraction() {
        let img = grey(1, 100, 0.5);
        let out = add_noise(&img, &spec(NoiseKind::SaltPepper { amount: 0.1 }, 11)).unwrap();
        let changed = out.data().iter().filter(|&&v| v != 0.5).count() as f64 / 10_000.0;
        assert!((changed - 0.1).abs() <= 0.01, "{changed}");
    }

    #[test]
    fn clipped_gaussian_shrinks_sigma() {
        let img = grey(1, 100, 0.0);
        let out = add_noise(&img, &spec(NoiseKind::Gaussian { sigma: 0.2 }, 5)).unwrap();
        let m = out.data().iter().sum::<f64>() / out.len() as f64;
        let sd = (out.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
        assert!(sd > 0.1 && sd < 0.2, "{sd}");
    }

    #[test]
    fn deterministic_per_seed() {
        let img = grey(1, 10, 0.3);
        for kind in [NoiseKind::Gaussian { sigma: 0.1 }, NoiseKind::Poisson, NoiseKind::SaltPepper { amount: 0.2 }] {
            let a = add_noise(&img, &spec(kind.clone(), 1)).unwrap();
            assert_eq!(a, add_noise(&img, &spec(kind.clone(), 1)).unwrap());
            assert_ne!(a, add_noise(&img, &spec(kind, 2)).unwrap());
        }
    }

    #[test]
    fn horizontal_blur_spreads_a_dot() {
        let mut img = grey(1, 11, 0.0);
        img.data_mut()[5 * 11 + 5] = 1.0;
        let out = add_noise(
            &img,
            &spec(
                NoiseKind::MotionBlur {
                    kernel_length: 9,
                    angle: 0.0,
                },
                0,
            ),
        )
        .unwrap();
        let row: Vec<f64> = out.data()[5 * 11..6 * 11].to_vec();
        assert_eq!(row[0], 0.0);
        assert!(row[1..10].iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-12));
        assert!((out.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_input() {
        let img = grey(1, 2, 1.5);
        assert!(add_noise(&img, &spec(NoiseKind::Poisson, 0)).is_err());
        assert!(add_noise(&grey(1, 2, 0.5), &spec(NoiseKind::SaltPepper { amount: 2.0 }, 0)).is_err());
    }
}

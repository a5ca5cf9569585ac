use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Block-mean pooling of `(n, h, w, c)` images by `factor`. Sizes that are not
/// multiples of `factor` round up; edge blocks average their in-bounds pixels.
pub fn downsample_image(images: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::Config("downsample factor must be positive".into()));
    }
    let shape = images.shape();
    if shape.len() != 4 {
        return Err(Error::Shape(format!("expected (n, h, w, c) images, got {shape:?}")));
    }
    if factor == 1 {
        return Ok(images.clone());
    }
    let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let mut out = Tensor::zeros(vec![n, oh, ow, c]);
    for i in 0..n {
        let src = images.instance(i);
        let dst = out.instance_mut(i);
        for oy in 0..oh {
            for ox in 0..ow {
                let ys = oy * factor..((oy + 1) * factor).min(h);
                let xs = ox * factor..((ox + 1) * factor).min(w);
                let count = (ys.len() * xs.len()) as f64;
                for ch in 0..c {
                    let mut sum = 0.0;
                    for y in ys.clone() {
                        for x in xs.clone() {
                            sum += src[(y * w + x) * c + ch];
                        }
                    }
                    dst[(oy * ow + ox) * c + ch] = sum / count;
                }
            }
        }
    }
    Ok(out)
}

pub fn downsample_dataset(ds: &Dataset, factor: usize) -> Result<Dataset> {
    ds.with_features(downsample_image(&ds.features, factor)?)
}

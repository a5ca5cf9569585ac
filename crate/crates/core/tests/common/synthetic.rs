use iosearch::data::{Dataset, Split};
use iosearch::nn::Tensor;
use iosearch::rng;
use rand::Rng;

/// Tags the first 60% Train, the next 20% Val and the rest Test.
pub fn tag_splits(mut ds: Dataset) -> Dataset {
    let n = ds.instances();
    for i in 0..n {
        ds.split[i] = if i < n * 6 / 10 {
            Split::Train
        } else if i < n * 8 / 10 {
            Split::Val
        } else {
            Split::Test
        };
    }
    ds
}

/// Three features: 0 and 1 independent uniforms, 2 an exact copy of 0.
pub fn copy_noise(n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let mut data = Vec::with_capacity(n * 3);
    for _ in 0..n {
        let a: f64 = r.random();
        let b: f64 = r.random();
        data.extend([a, b, a]);
    }
    let x = Tensor::new(vec![n, 3, 1], data).unwrap();
    tag_splits(Dataset::new(x, vec![0; n], 1).unwrap())
}

/// Six features: 0 and 1 independent, 2..5 fixed linear mixes of them plus
/// a little noise. Labels split on the sign of feature 0 minus feature 1.
pub fn linear_six(n: usize, seed: u64, noise: f64) -> Dataset {
    let mut r = rng::stream(seed);
    let mix = [[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.7, -0.3]];
    let mut data = Vec::with_capacity(n * 6);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = r.random_range(-1.0..1.0);
        let b: f64 = r.random_range(-1.0..1.0);
        data.extend([a, b]);
        for m in mix {
            let e: f64 = r.random_range(-1.0..1.0);
            data.push(m[0] * a + m[1] * b + noise * e);
        }
        labels.push(usize::from(a > b));
    }
    let x = Tensor::new(vec![n, 6, 1], data).unwrap();
    tag_splits(Dataset::new(x, labels, 2).unwrap())
}

/// Six features: 0 generates 2..5 (scaled, lightly noisy), 1 is pure noise.
pub fn generator_six(n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let scales = [1.0, -0.8, 0.6, 0.5];
    let mut data = Vec::with_capacity(n * 6);
    for _ in 0..n {
        let a: f64 = r.random();
        let b: f64 = r.random();
        data.extend([a, b]);
        for s in scales {
            let e: f64 = r.random_range(-0.02..0.02);
            data.push(0.5 + s * (a - 0.5) + e);
        }
    }
    let x = Tensor::new(vec![n, 6, 1], data).unwrap();
    tag_splits(Dataset::new(x, vec![0; n], 1).unwrap())
}

/// Strictly unimodal values over kernel counts `lo..=hi`, peak drawn at random.
pub fn unimodal(lo: usize, hi: usize, seed: u64) -> (usize, Vec<f64>) {
    let mut r = rng::stream(seed);
    let peak = r.random_range(lo..=hi);
    let mut v = vec![0.0; hi + 1];
    v[peak] = 1.0;
    for x in (lo..peak).rev() {
        v[x] = v[x + 1] - r.random_range(0.001..0.1);
    }
    for x in peak + 1..=hi {
        v[x] = v[x - 1] - r.random_range(0.001..0.1);
    }
    (peak, v)
}

/// 8×8 images driven by two latents. The top-left 2×2 corner holds clean
/// functions of them; every other pixel is a noisy mix.
pub fn planted_corner(n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let weights: Vec<(f64, f64)> = (0..64).map(|_| (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    let mut data = Vec::with_capacity(n * 64);
    for _ in 0..n {
        let z1: f64 = r.random_range(-1.0..1.0);
        let z2: f64 = r.random_range(-1.0..1.0);
        for y in 0..8 {
            for x in 0..8 {
                let v = match (y, x) {
                    (0, 0) => z1,
                    (0, 1) => z2,
                    (1, 0) => z1 + z2,
                    (1, 1) => z1 - z2,
                    _ => {
                        let (a, b) = weights[y * 8 + x];
                        a * z1 + b * z2 + r.random_range(-0.6..0.6)
                    }
                };
                data.push(v);
            }
        }
    }
    let x = Tensor::new(vec![n, 8, 8, 1], data).unwrap();
    tag_splits(Dataset::new(x, vec![0; n], 1).unwrap())
}

use std::path::{Path, PathBuf};

use iosearch::data::{
    add_noise, downsample_image, load_idx, normalize, split_dataset, window_slice, Dataset, NoiseKind, NoiseSpec,
    NormMode, SeriesLabels, Split, SplitRatio, WindowConfig,
};
use iosearch::nn::Tensor;
use iosearch::run::{prepare_dataset, RunConfig};
use rand::Rng;

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k")
}

#[test]
fn mnist_idx_pair_loads_as_digit_images() {
    let d = mnist_dir();
    let ds = load_idx(&d.join("images-idx3-ubyte.gz"), &d.join("labels-idx1-ubyte.gz")).unwrap();
    assert_eq!(ds.instances(), 10_000);
    assert_eq!(ds.feature_shape(), &[28, 28, 1]);
    assert_eq!(ds.class_count, 10);
    assert!(ds.class_histogram().iter().all(|&c| c > 800));
    // Raw bytes, no normalisation yet.
    assert_eq!(ds.features.data().iter().cloned().fold(0.0, f64::max), 255.0);
}

#[test]
fn desk_preparation_gives_requested_split_sizes() {
    let d = mnist_dir();
    let cfg = RunConfig::from_json(&format!(
        r#"{{"schema_version": 1, "seed": 0, "dataset": {{
            "source": {{"kind": "idx", "images": {:?}, "labels": {:?}}},
            "limit": 3000, "downsample": 2, "split": {{"train": 4, "val": 1, "test": 1}}}}}}"#,
        d.join("images-idx3-ubyte.gz"),
        d.join("labels-idx1-ubyte.gz")
    ))
    .unwrap();
    let (ds, stats) = prepare_dataset(&cfg.dataset, cfg.seed).unwrap();
    assert_eq!(ds.feature_shape(), &[14, 14, 1]);
    let counts = ds.split_counts();
    assert_eq!((counts[&Split::Train], counts[&Split::Val], counts[&Split::Test]), (2000, 500, 500));
    assert!(stats.is_some());
    let (train, _) = ds.part(Split::Train);
    let (lo, hi) = train.data().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert_eq!((lo, hi), (0.0, 1.0));
}

#[test]
fn standard_scaling_is_a_fixed_point() {
    let mut r = iosearch::rng::stream(2);
    let n = 120;
    let data: Vec<f64> = (0..n * 4 * 2)
        .map(|i| if i % 2 == 0 { r.random_range(0.0..1000.0) } else { r.random_range(-0.01..0.01) })
        .collect();
    let ds = Dataset::new(Tensor::new(vec![n, 4, 2], data).unwrap(), vec![0; n], 1).unwrap();
    let ds = split_dataset(&ds, SplitRatio::default(), false, 4).unwrap();
    let (once, _) = normalize(&ds, NormMode::Standard, true).unwrap();
    let (train, _) = once.part(Split::Train);
    for ch in 0..2 {
        let v: Vec<f64> = train.data().iter().skip(ch).step_by(2).copied().collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, "channel {ch}: {m} {sd}");
    }
    let (twice, _) = normalize(&once, NormMode::Standard, true).unwrap();
    for (a, b) in once.features.data().iter().zip(twice.features.data()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn windows_partition_the_truncated_series() {
    let mut r = iosearch::rng::stream(3);
    for _ in 0..50 {
        let b = r.random_range(1..40);
        let len = r.random_range(b..400);
        let ch = r.random_range(1..4);
        let values: Vec<f64> = (0..len * ch).map(|_| r.random::<f64>()).collect();
        let series = Tensor::new(vec![len, ch], values.clone()).unwrap();
        let ds = window_slice(&series, SeriesLabels::Constant(0), 1, &WindowConfig::blocks(b)).unwrap();
        assert_eq!(ds.instances(), len / b);
        let joined: Vec<u64> = ds.features.data().iter().map(|v| v.to_bits()).collect();
        let expect: Vec<u64> = values[..(len / b) * b * ch].iter().map(|v| v.to_bits()).collect();
        assert_eq!(joined, expect);
    }
}

#[test]
fn noise_is_a_pure_function_of_input_and_spec() {
    let mut r = iosearch::rng::stream(4);
    let imgs = Tensor::new(vec![3, 10, 10, 1], (0..300).map(|_| r.random::<f64>()).collect()).unwrap();
    for kind in [
        NoiseKind::Gaussian { sigma: 0.1 },
        NoiseKind::Poisson,
        NoiseKind::SaltPepper { amount: 0.2 },
        NoiseKind::MotionBlur {
            kernel_length: 9,
            angle: 30.0,
        },
    ] {
        let spec = NoiseSpec { kind, seed: 8 };
        let a = add_noise(&imgs, &spec).unwrap();
        assert_eq!(a, add_noise(&imgs, &spec).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let zero = NoiseSpec {
        kind: NoiseKind::Gaussian { sigma: 0.0 },
        seed: 1,
    };
    assert_eq!(add_noise(&imgs, &zero).unwrap(), imgs);
}

#[test]
fn halving_mnist_resolution() {
    let x = Tensor::new(vec![1, 2, 2, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    assert_eq!(downsample_image(&x, 2).unwrap().data(), &[1.5]);
    let big = Tensor::zeros(vec![2, 28, 28, 1]);
    assert_eq!(downsample_image(&big, 2).unwrap().shape(), &[2, 14, 14, 1]);
    assert_eq!(downsample_image(&big, 1).unwrap(), big);
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. `ACCEPTANCE_ONLY=3,4` restricts the run.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::gradcheck::{check_layer_kind, layer_kinds};
use common::oracle::{exhaustive_argmax, greedy_linear};
use common::synthetic::{linear_six, unimodal};
use iosearch::analysis::RunRecord;
use iosearch::autoencoder::{train_io_on, IOArch, IOAutoencoder, IOConfig};
use iosearch::data::{add_noise, window_slice, NoiseKind, NoiseSpec, SeriesLabels, WindowConfig};
use iosearch::nn::{self, Network, Samples, Target, Tensor, TrainConfig};
use iosearch::run::{cmd_noise_suite, cmd_search, RunConfig, SearchOutcome, SearchRunOptions, TRACE_FILE};
use iosearch::search::{feature_ranking, optimize_kernels, sfs_search, KernelSearchConfig, LinearScorer};
use rand::Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    if took <= limit {
        Ok(took)
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn gradient_correctness() -> Outcome {
    let t = Instant::now();
    let mut worst = (0.0f64, "");
    for kind in layer_kinds() {
        let e = check_layer_kind(kind, 20);
        if !(e <= worst.0) {
            worst = (e, kind);
        }
    }
    let took = within(Duration::from_secs(120), t)?;
    check(
        worst.0 <= 1e-4,
        format!("{} layer kinds x 20 instances, worst relative error {:.2e} ({}), {took:.1?}", layer_kinds().len(), worst.0, worst.1),
    )
}

fn full_mask_matches_plain_autoencoder() -> Outcome {
    let images = |n: usize, seed| {
        let mut r = iosearch::rng::stream(seed);
        Tensor::new(vec![n, 8, 8, 1], (0..n * 64).map(|_| r.random()).collect()).unwrap()
    };
    let (train_x, val_x) = (images(60, 1), images(20, 2));
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 6,
        patience: 6,
        batch_size: 16,
        ..Default::default()
    };
    let ae = IOAutoencoder::new(&[8, 8, 1], IOConfig::standard(64), IOArch::default(), 21).map_err(|e| e.to_string())?;
    let layers = ae.network().layers().to_vec();
    let (_, _, masked) = train_io_on(ae, &train_x, &val_x, &cfg).map_err(|e| e.to_string())?;
    let plain = Network::build(&[8, 8, 1], layers, 21).map_err(|e| e.to_string())?;
    let target = |x| Target::Values { values: x, weights: None };
    let (_, unmasked) = nn::train(plain, Samples::new(&train_x, target(&train_x)), Samples::new(&val_x, target(&val_x)), &cfg)
        .map_err(|e| e.to_string())?;
    if masked.train_loss.len() != unmasked.train_loss.len() {
        return Err(format!("{} vs {} epochs", masked.train_loss.len(), unmasked.train_loss.len()));
    }
    let gap = masked
        .train_loss
        .iter()
        .zip(&unmasked.train_loss)
        .chain(masked.val_loss.iter().zip(&unmasked.val_loss))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(gap <= 1e-12, format!("{} epochs, max per-epoch loss gap {gap:.1e}", masked.train_loss.len()))
}

fn sfs_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut matched = 0;
    for seed in 0..10 {
        let ds = linear_six(300, seed, 0.1);
        let trace = sfs_search(&ds, &Default::default(), &LinearScorer::default(), None).map_err(|e| e.to_string())?;
        if feature_ranking(&trace) == greedy_linear(&ds, 5) {
            matched += 1;
        }
    }
    let took = within(Duration::from_secs(60), t)?;
    check(matched == 10, format!("{matched}/10 seeds match the brute-force greedy order, {took:.1?}"))
}

fn ternary_search() -> Outcome {
    let t = Instant::now();
    let mut matched = 0;
    for seed in 0..100 {
        let (_, v) = unimodal(4, 64, seed);
        let r = optimize_kernels(|k| Ok(v[k]), &KernelSearchConfig::default()).map_err(|e| e.to_string())?;
        if r.best == 4 + exhaustive_argmax(&v[4..]) {
            matched += 1;
        }
    }
    let took = within(Duration::from_secs(1), t)?;
    check(matched == 100, format!("{matched}/100 sequences, {took:.1?}"))
}

fn windowing_arithmetic() -> Outcome {
    let mut r = iosearch::rng::stream(70);
    for _ in 0..50 {
        let b = r.random_range(1..64);
        let len = r.random_range(b..2000);
        let ch = r.random_range(1..5);
        let values: Vec<f64> = (0..len * ch).map(|_| r.random_range(-1e6..1e6)).collect();
        let series = Tensor::new(vec![len, ch], values.clone()).unwrap();
        let ds = window_slice(&series, SeriesLabels::Constant(0), 1, &WindowConfig::blocks(b)).map_err(|e| e.to_string())?;
        if ds.instances() != len / b {
            return Err(format!("L={len} b={b}: {} windows", ds.instances()));
        }
        let same = ds
            .features
            .data()
            .iter()
            .zip(&values[..len / b * b * ch])
            .all(|(a, e)| a.to_bits() == e.to_bits());
        if !same || ds.features.len() != len / b * b * ch {
            return Err(format!("L={len} b={b}: concatenation differs"));
        }
    }
    Ok("50/50 (L, b) pairs".into())
}

fn noise_statistics() -> Outcome {
    let mut r = iosearch::rng::stream(80);
    // Strictly inside (0, 1), so every salted or peppered pixel changes.
    let x = Tensor::new(vec![100, 10, 10, 1], (0..10_000).map(|_| r.random_range(0.01..0.99)).collect()).unwrap();
    let sp = NoiseSpec {
        kind: NoiseKind::SaltPepper { amount: 0.1 },
        seed: 3,
    };
    let y = add_noise(&x, &sp).map_err(|e| e.to_string())?;
    let changed = x.data().iter().zip(y.data()).filter(|(a, b)| a != b).count() as f64 / 10_000.0;
    let zero = NoiseSpec {
        kind: NoiseKind::Gaussian { sigma: 0.0 },
        seed: 3,
    };
    let identity = add_noise(&x, &zero).map_err(|e| e.to_string())? == x;
    check(
        (changed - 0.1).abs() <= 0.01 && identity,
        format!("salt-and-pepper fraction {changed:.4}, gaussian sigma 0 identity: {identity}"),
    )
}

fn mnist_source() -> Value {
    let d = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k");
    json!({"kind": "idx", "images": d.join("images-idx3-ubyte.gz"), "labels": d.join("labels-idx1-ubyte.gz")})
}

fn tiny_config() -> RunConfig {
    let cfg = json!({
        "schema_version": 1,
        "seed": 5,
        "dataset": {"source": mnist_source(), "limit": 300, "downsample": 4},
        "search": {"max_k": 3, "candidate_fraction": 0.2, "repetitions_per_k": 2, "accuracy_patience": 3},
        "autoencoder": {
            "arch": {"kernel_counts": [4, 2]},
            "train": {"max_epochs": 2, "patience": 2, "learning_rate": 0.01},
            "train_subset": 100
        },
        "evaluation": {
            "io_train": {"max_epochs": 2, "patience": 2, "learning_rate": 0.01},
            "classifier": {"kernel_count": 4, "dense_width": 16},
            "classifier_train": {"max_epochs": 2, "patience": 2, "learning_rate": 0.01},
            "test_repetitions": 2
        }
    });
    RunConfig::from_json(&cfg.to_string()).unwrap()
}

fn completed(outcome: iosearch::Result<SearchOutcome>) -> Result<RunRecord, String> {
    match outcome.map_err(|e| e.to_string())? {
        SearchOutcome::Completed(r) => Ok(*r),
        SearchOutcome::Paused(_) => Err("search paused unexpectedly".into()),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tiny_config();
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        completed(cmd_search(&cfg, &out, &SearchRunOptions::default()))?;
        bytes.push(std::fs::read(out.join(TRACE_FILE)).map_err(|e| e.to_string())?);
    }
    check(bytes[0] == bytes[1], format!("two runs, trace.json {} and {} bytes, identical: {}", bytes[0].len(), bytes[1].len(), bytes[0] == bytes[1]))
}

fn robustness_clustering() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = tiny_config();
    cfg.noise = Some(vec![
        NoiseSpec {
            kind: NoiseKind::Gaussian { sigma: 0.0 },
            seed: 1,
        },
        NoiseSpec {
            kind: NoiseKind::SaltPepper { amount: 0.05 },
            seed: 2,
        },
    ]);
    let out = cmd_noise_suite(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let failed: Vec<&str> = out.variants.iter().filter(|v| v.error.is_some()).map(|v| v.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(format!("variants failed: {failed:?}"));
    }
    let st = out.stability.ok_or("no stability report")?;
    let counts: Vec<(usize, usize)> = st.iterations.iter().map(|i| (i.iteration, i.cluster_count)).collect();
    let clusters_ok = !counts.is_empty() && counts.iter().enumerate().all(|(j, &(it, c))| it == j + 1 && c == it);
    let trace = |name: &str| out.variants.iter().find(|v| v.name == name).and_then(|v| v.record.as_ref()).map(|r| &r.trace);
    let same = trace("original").is_some() && trace("original") == trace("gaussian");
    check(clusters_ok && same, format!("(iteration, clusters) {counts:?}, sigma-0 trace equals original: {same}"))
}

/// Desk MNIST: 14x14 digits, 2000/500/500, flat search to twelve features.
fn desk_config() -> RunConfig {
    let cfg = json!({
        "schema_version": 1,
        "seed": 2024,
        "dataset": {
            "source": mnist_source(),
            "limit": 3000,
            "downsample": 2,
            "split": {"train": 4, "val": 1, "test": 1}
        },
        "search": {"max_k": 12, "candidate_fraction": 0.25, "repetitions_per_k": 5, "accuracy_patience": 12},
        "autoencoder": {
            "train": {"max_epochs": 5, "patience": 2, "learning_rate": 0.005},
            "train_subset": 500
        },
        "evaluation": {
            "io_train": {"max_epochs": 10, "patience": 3, "learning_rate": 0.005},
            "classifier_train": {"max_epochs": 10, "patience": 3, "learning_rate": 0.002},
            "test_repetitions": 5
        }
    });
    RunConfig::from_json(&cfg.to_string()).unwrap()
}

struct DeskRuns {
    flat: Result<RunRecord, String>,
    hier: Result<RunRecord, String>,
}

fn desk_runs() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let root = std::env::var_os("ACCEPTANCE_DESK_DIR").map(PathBuf::from);
        let tmp = tempfile::tempdir().unwrap();
        let base = root.unwrap_or_else(|| tmp.path().to_path_buf());
        let cfg = desk_config();
        let run = |name: &str, hier: bool| {
            let t = Instant::now();
            let opts = SearchRunOptions {
                hier,
                ..Default::default()
            };
            let r = completed(cmd_search(&cfg, &base.join(name), &opts));
            println!("  [{name} desk run: {:.0?}]", t.elapsed());
            r
        };
        DeskRuns {
            flat: run("flat", false),
            hier: run("hier", true),
        }
    })
}

fn desk_reproduction() -> Outcome {
    let flat = desk_runs().flat.as_ref().map_err(Clone::clone)?;
    let ev = flat.evaluation.as_ref().ok_or("no final evaluation")?;
    let wins = ev
        .augmented
        .values
        .iter()
        .zip(&ev.plain.values)
        .filter(|(a, p)| a >= p)
        .count();
    let close = ev.augmented.mean >= ev.plain.mean - 0.01;
    check(
        close && wins >= 3,
        format!(
            "k={} augmented {:.4} vs plain {:.4} test accuracy, augmented >= plain in {wins}/{} paired seeds",
            ev.k,
            ev.augmented.mean,
            ev.plain.mean,
            ev.plain.values.len()
        ),
    )
}

fn hier_efficiency() -> Outcome {
    let runs = desk_runs();
    let flat = runs.flat.as_ref().map_err(Clone::clone)?;
    let hier = runs.hier.as_ref().map_err(Clone::clone)?;
    let (kf, kh) = (flat.trace.steps.len(), hier.trace.steps.len());
    let (ef, eh) = (flat.telemetry.candidate_evaluations, hier.telemetry.candidate_evaluations);
    let acc = |r: &RunRecord| r.evaluation.as_ref().map(|e| e.augmented.mean).unwrap_or(f64::NAN);
    let (af, ah) = (acc(flat), acc(hier));
    let ratio = eh as f64 / ef as f64;
    check(
        kf == kh && ratio <= 0.5 && (af - ah).abs() <= 0.015,
        format!("{kh} vs {kf} features, {eh}/{ef} = {ratio:.2}x candidate evaluations, accuracy {ah:.4} vs {af:.4}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradient_correctness),
        ("full mask equals plain autoencoder", full_mask_matches_plain_autoencoder),
        ("SFS oracle equivalence", sfs_oracle_equivalence),
        ("ternary kernel search", ternary_search),
        ("desk MNIST augmented vs plain", desk_reproduction),
        ("coarse-to-fine efficiency", hier_efficiency),
        ("windowing arithmetic", windowing_arithmetic),
        ("noise statistics", noise_statistics),
        ("search determinism", determinism),
        ("robustness clustering", robustness_clustering),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS {n:>2} {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL {n:>2} {name}: {d}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

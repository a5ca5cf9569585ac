//! End-to-end runs: dataset preparation, the search pipeline, the final test
//! comparison, the noise robustness suite and report emission. Every command
//! works inside one run directory.

mod config;
mod prepare;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    cluster_selected_features, emit_artifacts, ArtifactManifest, FinalEvaluation, RunRecord, RunSeeds, StabilityReport,
    Summary, Telemetry, VariantSelection,
};
use crate::autoencoder::FeatureMask;
use crate::data::{add_noise, Dataset, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::search::{
    classifier_accuracies, determine_optimal_k, hier_search, io_for, optimize_kernels, sfs_search_with,
    AugmentedEvaluator, HierConfig, SFSConfig, SearchOptions, SearchTrace, StopReason,
};

pub use config::{
    AutoencoderConfig, DatasetConfig, DatasetSource, EvaluationConfig, RunConfig, CONFIG_SCHEMA_VERSION,
};
pub use prepare::{prepare_dataset, read_dataset_cache, write_dataset_cache};

pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.json";
pub const RECORD_FILE: &str = "record.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_CACHE: &str = "dataset.bin";
pub const DATASET_MANIFEST: &str = "dataset.json";
pub const STABILITY_FILE: &str = "stability.json";
pub const ARTIFACT_DIR: &str = "artifacts";

/// Writes through a temporary sibling file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::load(path, Some(e.column() as u64), e.to_string()))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn derive_seeds(global: u64) -> RunSeeds {
    RunSeeds {
        global,
        search: crate::rng::derive(global, &[0x5ea4]),
        kernel: crate::rng::derive(global, &[0x4e47]),
        evaluation: crate::rng::derive(global, &[0xe7a1]),
    }
}

/// Hashes of the files that make a run directory self-describing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub dataset: DatasetManifest,
    pub seeds: RunSeeds,
    pub files: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct PreparedKey {
    seed: u64,
    dataset: DatasetConfig,
}

/// Prepares the dataset described by `cfg` and caches it in `out`.
pub fn cmd_prepare(cfg: &RunConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let (ds, stats) = prepare_dataset(&cfg.dataset, cfg.seed).map_err(|e| e.in_stage("prepare"))?;
    let manifest = ds.manifest(stats);
    store_prepared(cfg, out, &ds, &manifest)?;
    Ok(manifest)
}

fn store_prepared(cfg: &RunConfig, out: &Path, ds: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    write_dataset_cache(ds, &out.join(DATASET_CACHE))?;
    write_json(
        &out.join("dataset_key.json"),
        &PreparedKey {
            seed: cfg.seed,
            dataset: cfg.dataset.clone(),
        },
    )?;
    write_json(&out.join(DATASET_MANIFEST), manifest)
}

/// The cached dataset when it was prepared from the same settings,
/// otherwise a fresh preparation.
pub fn load_or_prepare(cfg: &RunConfig, out: &Path) -> Result<(Dataset, DatasetManifest)> {
    let key = PreparedKey {
        seed: cfg.seed,
        dataset: cfg.dataset.clone(),
    };
    let cached = out.join(DATASET_CACHE);
    if cached.exists() {
        if let Ok(stored) = read_json::<PreparedKey>(&out.join("dataset_key.json")) {
            if stored == key {
                let ds = read_dataset_cache(&cached)?;
                let manifest: DatasetManifest = read_json(&out.join(DATASET_MANIFEST))?;
                if manifest.content_hash == ds.content_hash() {
                    return Ok((ds, manifest));
                }
            }
        }
    }
    cmd_prepare(cfg, out)?;
    Ok((read_dataset_cache(&cached)?, read_json(&out.join(DATASET_MANIFEST))?))
}

/// Upper bound on the work a search will do.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub steps: usize,
    pub candidate_evaluations: usize,
    pub repetitions_per_step: usize,
    /// Classifier trainings spent measuring accuracy during the search.
    pub accuracy_trainings: usize,
}

fn flat_candidates(pool: usize, feature_count: usize, max_k: Option<usize>, fraction: f64) -> (usize, usize) {
    let steps = max_k.unwrap_or(usize::MAX).min(pool).min(feature_count.saturating_sub(1));
    let evals = (0..steps)
        .map(|k| ((fraction * (pool - k) as f64).ceil() as usize).clamp(1, pool - k))
        .sum();
    (steps, evals)
}

/// Budget for a run over instances of `shape`, without training anything.
pub fn plan_budget(cfg: &RunConfig, shape: &[usize], hier: Option<&HierConfig>) -> Result<Budget> {
    let layout = crate::autoencoder::MaskLayout::infer(shape);
    let n = layout.feature_count(shape);
    let s = &cfg.search;
    let (steps, evals) = match hier {
        None => flat_candidates(n, n, s.max_k, s.candidate_fraction),
        Some(h) => {
            if shape.len() != 3 {
                return Err(Error::Data("hierarchical search needs (h, w, c) images".into()));
            }
            let mut pool = None;
            let mut evals = 0;
            for depth in (1..h.levels).rev() {
                let f = h.reduction_factor.pow(depth as u32);
                let coarse_n = shape[0].div_ceil(f) * shape[1].div_ceil(f) * shape[2];
                let pool_n = pool.unwrap_or(coarse_n).min(coarse_n);
                let picks = h.coarse_picks.or(s.max_k.map(|k| k.div_ceil(f))).unwrap_or(pool_n);
                if picks < pool_n && coarse_n >= 2 {
                    evals += flat_candidates(pool_n, coarse_n, Some(picks), s.candidate_fraction).1;
                }
                let region = h.reduction_factor.pow(2) + (2 * h.neighborhood_radius + 1).pow(2);
                pool = Some(picks.min(pool_n) * region);
            }
            let pool_n = pool.unwrap_or(n).min(n);
            let (steps, e) = flat_candidates(pool_n, n, s.max_k, s.candidate_fraction);
            (steps, evals + e)
        }
    };
    Ok(Budget {
        steps,
        candidate_evaluations: evals,
        repetitions_per_step: s.repetitions_per_k,
        accuracy_trainings: steps * s.repetitions_per_k,
    })
}

#[derive(Clone, Debug, Default)]
pub struct SearchRunOptions {
    /// Continue from `trace.json` in the run directory.
    pub resume: bool,
    /// Pause after this many completed steps (testing aid).
    pub stop_after: Option<usize>,
    /// Run coarse-to-fine even when the config has no `hier` section.
    pub hier: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Completed(Box<RunRecord>),
    Paused(SearchTrace),
}

fn search_evaluator(cfg: &RunConfig, split: Split) -> AugmentedEvaluator {
    AugmentedEvaluator {
        arch: cfg.autoencoder.arch.clone(),
        io_train: cfg.evaluation.io_train.clone(),
        classifier: cfg.evaluation.classifier.clone(),
        classifier_train: cfg.evaluation.classifier_train.clone(),
        split,
    }
}

/// Test-split accuracies of the plain CNN and of the CNN fed the input joined
/// with its reconstruction from `mask`. Repetition `i` of both uses the same
/// seed, so the two lists are paired.
pub fn final_evaluation(
    ds: &Dataset,
    cfg: &RunConfig,
    mask: &FeatureMask,
    kernel_count: usize,
    seed: u64,
) -> Result<FinalEvaluation> {
    let classifier = cfg.evaluation.classifier.with_kernels(kernel_count);
    let reps = cfg.evaluation.test_repetitions;
    let plain = classifier_accuracies(ds, &classifier, &cfg.evaluation.classifier_train, Split::Test, seed, reps)?;
    let evaluator = AugmentedEvaluator {
        classifier,
        ..search_evaluator(cfg, Split::Test)
    };
    let aug = evaluator.evaluate(ds, &io_for(mask, cfg.search.direction), seed, reps)?;
    Ok(FinalEvaluation {
        k: mask.cardinality(),
        kernel_count,
        plain: Summary::from_values(plain)?,
        augmented: Summary::from_values(aug.accuracies)?,
        reconstruction: aug.reconstruction,
    })
}

fn check_config_copy(cfg: &RunConfig, out: &Path, resume: bool) -> Result<()> {
    let path = out.join(CONFIG_FILE);
    if resume && path.exists() {
        let stored: RunConfig = read_json(&path)?;
        if &stored != cfg {
            return Err(Error::Config(format!("{} differs from the config being resumed", path.display())));
        }
    }
    write_json(&path, cfg)
}

/// Full pipeline: search (flat or coarse-to-fine), optimal k, kernel search,
/// then the test comparison. Writes config, trace, record, manifest and
/// artifacts into `out`.
pub fn cmd_search(cfg: &RunConfig, out: &Path, opts: &SearchRunOptions) -> Result<SearchOutcome> {
    cfg.validate()?;
    let (ds, manifest) = load_or_prepare(cfg, out)?;
    run_search_on(&ds, manifest, cfg, out, opts)
}

fn run_search_on(
    ds: &Dataset,
    dataset: DatasetManifest,
    cfg: &RunConfig,
    out: &Path,
    opts: &SearchRunOptions,
) -> Result<SearchOutcome> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    check_config_copy(cfg, out, opts.resume)?;
    let seeds = derive_seeds(cfg.seed);
    let sfs_cfg = SFSConfig {
        seed: seeds.search,
        ..cfg.search.clone()
    };
    let scorer = cfg.autoencoder.scorer();
    let evaluator = search_evaluator(cfg, Split::Val);
    let trace_path = out.join(TRACE_FILE);
    let resume = if opts.resume && trace_path.exists() {
        Some(read_json::<SearchTrace>(&trace_path)?)
    } else {
        None
    };
    let mut checkpoint = |t: &SearchTrace| write_json(&trace_path, t);
    let search_opts = SearchOptions {
        resume,
        on_step: Some(&mut checkpoint),
        stop_after: opts.stop_after,
        ..Default::default()
    };

    let mut telemetry = Telemetry::default();
    let clock = Instant::now();
    let hier = cfg.hier.clone().or_else(|| opts.hier.then(HierConfig::default));
    let (trace, hier_levels, evaluations) = match &hier {
        Some(h) => {
            let r = hier_search(ds, h, &sfs_cfg, &scorer, Some(&evaluator), search_opts).map_err(|e| e.in_stage("search"))?;
            (r.trace, Some(r.levels), r.total_evaluations)
        }
        None => {
            let t = sfs_search_with(ds, &sfs_cfg, &scorer, Some(&evaluator), search_opts).map_err(|e| e.in_stage("search"))?;
            let n = t.evaluations;
            (t, None, n)
        }
    };
    telemetry.wall_clock_seconds.insert("search".into(), clock.elapsed().as_secs_f64());
    telemetry.candidate_evaluations = evaluations;
    write_json(&trace_path, &trace)?;
    if trace.stop_reason == Some(StopReason::Paused) {
        return Ok(SearchOutcome::Paused(trace));
    }

    let k = determine_optimal_k(&trace).map_err(|e| e.in_stage("optimal k"))?;
    let mask = trace.mask_at(k)?;
    let clock = Instant::now();
    let mut kernel_accuracies = BTreeMap::new();
    let kernel_search = match &cfg.kernel_search {
        Some(kcfg) => {
            let (aug, _) = evaluator.augment(ds, &io_for(&mask, sfs_cfg.direction), seeds.kernel)?;
            let result = optimize_kernels(
                |kc| {
                    let acc = classifier_accuracies(
                        &aug,
                        &cfg.evaluation.classifier.with_kernels(kc),
                        &cfg.evaluation.classifier_train,
                        Split::Val,
                        crate::rng::derive(seeds.kernel, &[kc as u64]),
                        sfs_cfg.repetitions_per_k,
                    )?;
                    let s = Summary::from_values(acc)?;
                    let mean = s.mean;
                    kernel_accuracies.insert(kc, s);
                    Ok(mean)
                },
                kcfg,
            )
            .map_err(|e| e.in_stage("kernel search"))?;
            Some(result)
        }
        None => None,
    };
    telemetry.wall_clock_seconds.insert("kernel_search".into(), clock.elapsed().as_secs_f64());
    let kernel_count = kernel_search
        .as_ref()
        .map(|r| r.best)
        .unwrap_or(cfg.evaluation.classifier.kernel_count);

    let clock = Instant::now();
    let evaluation =
        final_evaluation(ds, cfg, &mask, kernel_count, seeds.evaluation).map_err(|e| e.in_stage("final evaluation"))?;
    telemetry.wall_clock_seconds.insert("final_evaluation".into(), clock.elapsed().as_secs_f64());

    let record = RunRecord {
        schema_version: crate::analysis::RECORD_SCHEMA_VERSION,
        config: cfg.clone(),
        seeds: seeds.clone(),
        dataset,
        trace,
        hier_levels,
        kernel_search,
        kernel_accuracies,
        evaluation: Some(evaluation),
        telemetry,
    };
    finish_run_dir(&record, None, out)?;
    Ok(SearchOutcome::Completed(Box::new(record)))
}

/// Writes record, artifacts and the run manifest.
fn finish_run_dir(record: &RunRecord, stability: Option<&StabilityReport>, out: &Path) -> Result<ArtifactManifest> {
    write_json(&out.join(RECORD_FILE), record)?;
    let artifacts = emit_artifacts(record, stability, &out.join(ARTIFACT_DIR))?;
    let mut files = BTreeMap::new();
    for name in [CONFIG_FILE, TRACE_FILE, RECORD_FILE, STABILITY_FILE] {
        let p = out.join(name);
        if p.exists() {
            files.insert(name.to_string(), sha256_file(&p)?);
        }
    }
    files.insert(
        format!("{ARTIFACT_DIR}/{MANIFEST_FILE}"),
        sha256_file(&out.join(ARTIFACT_DIR).join(MANIFEST_FILE))?,
    );
    write_json(
        &out.join(MANIFEST_FILE),
        &RunManifest {
            schema_version: 1,
            dataset: record.dataset.clone(),
            seeds: record.seeds.clone(),
            files,
        },
    )?;
    Ok(artifacts)
}

/// Recomputes the test comparison of a finished run.
pub fn cmd_evaluate(out: &Path) -> Result<FinalEvaluation> {
    let record: RunRecord = read_json(&out.join(RECORD_FILE))?;
    let (ds, _) = load_or_prepare(&record.config, out)?;
    let k = determine_optimal_k(&record.trace)?;
    let kernel_count = record
        .evaluation
        .as_ref()
        .map(|e| e.kernel_count)
        .unwrap_or(record.config.evaluation.classifier.kernel_count);
    let ev = final_evaluation(&ds, &record.config, &record.trace.mask_at(k)?, kernel_count, record.seeds.evaluation)?;
    write_json(&out.join("evaluation.json"), &ev)?;
    Ok(ev)
}

/// Re-emits artifacts from a stored record and returns a short summary.
pub fn cmd_report(out: &Path) -> Result<(ArtifactManifest, String)> {
    let record: RunRecord = read_json(&out.join(RECORD_FILE))?;
    let stability_path = out.join(STABILITY_FILE);
    let stability: Option<StabilityReport> = if stability_path.exists() {
        Some(read_json(&stability_path)?)
    } else {
        None
    };
    let manifest = finish_run_dir(&record, stability.as_ref(), out)?;
    Ok((manifest, summarize(&record)))
}

pub fn summarize(record: &RunRecord) -> String {
    let t = &record.trace;
    let mut s = format!(
        "steps: {}  optimal k: {}  candidate evaluations: {}\n",
        t.steps.len(),
        t.optimal_k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
        record.telemetry.candidate_evaluations
    );
    if let Some(ev) = &record.evaluation {
        s += &format!(
            "test accuracy at k = {} with {} kernels: plain {:.4} ± {:.4}, augmented {:.4} ± {:.4}\n",
            ev.k, ev.kernel_count, ev.plain.mean, ev.plain.std, ev.augmented.mean, ev.augmented.std
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub name: String,
    pub run_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub record: Option<RunRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSuiteOutcome {
    pub variants: Vec<VariantOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
}

/// Runs the search on the clean images and on each noise variant, then
/// clusters the selected pixels per iteration. A failing variant is reported
/// and skipped. All variants, the clean one included, see features clipped to
/// `[0, 1]`.
pub fn cmd_noise_suite(cfg: &RunConfig, out: &Path) -> Result<NoiseSuiteOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    let (ds, manifest) = load_or_prepare(cfg, out)?;
    if ds.feature_shape().len() != 3 {
        return Err(Error::Data("the noise suite needs (h, w, c) images".into()));
    }
    let base = ds.with_features(ds.features.map(|v| v.clamp(0.0, 1.0)))?;

    let mut names: Vec<String> = vec!["original".into()];
    let mut sets: Vec<Result<Dataset>> = vec![Ok(base.clone())];
    for spec in cfg.noise_specs() {
        let mut name = spec.kind.name().to_string();
        if names.contains(&name) {
            name = format!("{name}_{}", names.len());
        }
        names.push(name);
        sets.push(add_noise(&base.features, &spec).and_then(|x| base.with_features(x)));
    }

    let mut variants = Vec::new();
    for (name, set) in names.into_iter().zip(sets) {
        let dir = out.join("variants").join(&name);
        let result = set.and_then(|v| {
            let m = DatasetManifest {
                content_hash: v.content_hash(),
                ..manifest.clone()
            };
            // Cached so that evaluate and report reuse the corrupted images.
            store_prepared(cfg, &dir, &v, &m)?;
            run_search_on(&v, m, cfg, &dir, &SearchRunOptions::default())
        });
        let (record, error) = match result {
            Ok(SearchOutcome::Completed(r)) => (Some(*r), None),
            Ok(SearchOutcome::Paused(_)) => (None, Some("search paused".into())),
            Err(e) => (None, Some(e.to_string())),
        };
        variants.push(VariantOutcome {
            name,
            run_dir: dir,
            error,
            record,
        });
    }

    let selections: Vec<VariantSelection> = variants
        .iter()
        .filter_map(|v| v.record.as_ref().map(|r| VariantSelection::from_trace(&v.name, &r.trace)))
        .collect();
    let common = selections.iter().map(|s| s.ranking.len()).min().unwrap_or(0);
    let t = cfg.stability_iterations.unwrap_or(common);
    let stability = if selections.is_empty() || t == 0 {
        None
    } else {
        Some(cluster_selected_features(&selections, t, cfg.seed).map_err(|e| e.in_stage("stability clustering"))?)
    };
    let outcome = NoiseSuiteOutcome { variants, stability };
    write_json(&out.join("suite.json"), &outcome)?;
    if let Some(st) = &outcome.stability {
        write_json(&out.join(STABILITY_FILE), st)?;
        if let Some(r) = outcome.variants[0].record.as_ref() {
            emit_artifacts(r, Some(st), &out.join(ARTIFACT_DIR))?;
        }
    }
    Ok(outcome)
}

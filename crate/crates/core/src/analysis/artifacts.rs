use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stability::StabilityReport;
use super::Summary;
use crate::autoencoder::ReconstructionReport;
use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::run::RunConfig;
use crate::search::{HierLevel, KernelSearchResult, SearchTrace};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Seeds every stage was run with, all derived from the global seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub global: u64,
    pub search: u64,
    pub kernel: u64,
    pub evaluation: u64,
}

/// Test-split comparison of the plain CNN against the augmented one at the
/// chosen feature set and kernel count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    pub k: usize,
    pub kernel_count: usize,
    pub plain: Summary,
    pub augmented: Summary,
    pub reconstruction: ReconstructionReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    /// Seconds spent per stage.
    pub wall_clock_seconds: BTreeMap<String, f64>,
    /// Candidate autoencoder trainings, summed over hierarchy levels.
    pub candidate_evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub seeds: RunSeeds,
    pub dataset: DatasetManifest,
    pub trace: SearchTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hier_levels: Option<Vec<HierLevel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_search: Option<KernelSearchResult>,
    /// Validation accuracies behind every kernel-search objective value.
    #[serde(default)]
    pub kernel_accuracies: BTreeMap<usize, Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<FinalEvaluation>,
    pub telemetry: Telemetry,
}

/// Content hashes of every emitted file, keyed by relative path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub schema_version: u32,
    pub files: BTreeMap<String, String>,
}

fn mask_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [h, w, _] => (*h, *w),
        _ => (1, shape.iter().product::<usize>() / shape.last().copied().unwrap_or(1).max(1)),
    }
}

fn render(record: &RunRecord, stability: Option<&StabilityReport>) -> Result<BTreeMap<String, Vec<u8>>> {
    let trace = &record.trace;
    if trace.steps.is_empty() {
        return Err(Error::Data("trace has no steps; nothing to report".into()));
    }
    let mut files = BTreeMap::new();
    let (h, w) = match crate::autoencoder::MaskLayout::infer(&trace.feature_shape) {
        crate::autoencoder::MaskLayout::Channels => (1, trace.final_mask.feature_count()),
        crate::autoencoder::MaskLayout::Coordinates => mask_dims(&trace.feature_shape),
    };
    for step in &trace.steps {
        files.insert(format!("masks/k_{:03}.pgm", step.k), trace.mask_at(step.k)?.to_pgm(h, w)?);
    }
    if let Some(k) = trace.optimal_k {
        files.insert("masks/optimal.pgm".into(), trace.mask_at(k)?.to_pgm(h, w)?);
    }

    let mut curve = String::from("k,chosen,mean,std,repetitions\n");
    let mut reps = String::from("group,k,repetition,accuracy\n");
    for s in &trace.steps {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(curve, "{},{},{},{},{}", s.k, s.chosen, fmt(s.accuracy_mean), fmt(s.accuracy_std), s.accuracies.len()).unwrap();
        for (i, a) in s.accuracies.iter().enumerate() {
            writeln!(reps, "search,{},{i},{a}", s.k).unwrap();
        }
    }
    if let Some(ev) = &record.evaluation {
        for (group, summary) in [("test_plain", &ev.plain), ("test_augmented", &ev.augmented)] {
            for (i, a) in summary.values.iter().enumerate() {
                writeln!(reps, "{group},{},{i},{a}", ev.k).unwrap();
            }
        }
    }
    files.insert("accuracy_vs_k.csv".into(), curve.into_bytes());
    files.insert("accuracy_repetitions.csv".into(), reps.into_bytes());
    files.insert("candidate_costs.csv".into(), trace.candidate_costs_csv().into_bytes());
    if let Some(st) = stability {
        files.insert("stability.json".into(), serde_json::to_vec_pretty(st)?);
    }
    Ok(files)
}

fn write_all(dir: &Path, files: &BTreeMap<String, Vec<u8>>, manifest: &ArtifactManifest) -> Result<()> {
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(manifest)?).map_err(|e| Error::io(&path, e))
}

/// Writes mask bitmaps, accuracy CSVs, the optional stability report and a
/// hash manifest into `out_dir`. Everything is staged in a sibling directory
/// and renamed into place, so a failure leaves no partial output.
pub fn emit_artifacts(record: &RunRecord, stability: Option<&StabilityReport>, out_dir: &Path) -> Result<ArtifactManifest> {
    let files = render(record, stability)?;
    let manifest = ArtifactManifest {
        schema_version: 1,
        files: files.iter().map(|(n, b)| (n.clone(), hex::encode(Sha256::digest(b)))).collect(),
    };
    let name = out_dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a directory name", out_dir.display())))?;
    let staging = out_dir.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    if let Err(e) = write_all(&staging, &files, &manifest) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out_dir.exists() {
        fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(manifest)
}

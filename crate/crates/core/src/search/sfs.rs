use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::AccuracyEvaluator;
use super::scorer::CandidateScorer;
use crate::autoencoder::{swap_direction, Direction, FeatureMask, IOConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Relative gap below which two candidate costs count as tied.
pub const COST_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SFSConfig {
    pub direction: Direction,
    /// Fraction of the remaining positions scored per step.
    pub candidate_fraction: f64,
    /// Consecutive non-improving steps tolerated before stopping.
    pub accuracy_patience: usize,
    pub repetitions_per_k: usize,
    pub max_k: Option<usize>,
    pub seed: u64,
}

impl Default for SFSConfig {
    fn default() -> Self {
        Self {
            direction: Direction::InputSearch,
            candidate_fraction: 1.0,
            accuracy_patience: 3,
            repetitions_per_k: 5,
            max_k: None,
            seed: 0,
        }
    }
}

impl SFSConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.candidate_fraction > 0.0 && self.candidate_fraction <= 1.0) {
            return Err(Error::Config("candidate_fraction must lie in (0, 1]".into()));
        }
        if self.repetitions_per_k == 0 || self.accuracy_patience == 0 {
            return Err(Error::Config("repetitions_per_k and accuracy_patience must be positive".into()));
        }
        if self.max_k == Some(0) {
            return Err(Error::Config("max_k must be positive".into()));
        }
        Ok(())
    }

    /// Seeds for step `k` (1-based): candidate `c` trains with
    /// `candidate_seed(k, c)`, repetitions start at `accuracy_seed(k)`.
    pub fn candidate_seed(&self, k: usize, candidate: usize) -> u64 {
        rng::derive(self.seed, &[1, k as u64, candidate as u64])
    }

    pub fn accuracy_seed(&self, k: usize) -> u64 {
        rng::derive(self.seed, &[2, k as u64])
    }

    fn sample_seed(&self, k: usize) -> u64 {
        rng::derive(self.seed, &[3, k as u64])
    }
}

/// The IO configuration scored for input set `mask` under `direction`.
pub fn io_for(mask: &FeatureMask, direction: Direction) -> IOConfig {
    let io = IOConfig::input_search(mask.clone());
    match direction {
        Direction::InputSearch => io,
        Direction::OutputSearch => swap_direction(&io),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    /// Mask size after this step.
    pub k: usize,
    pub chosen: usize,
    pub candidate_costs: BTreeMap<usize, f64>,
    /// Candidates whose training failed (divergence or non-finite output).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracies: Vec<f64>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Patience,
    MaxK,
    Exhausted,
    /// Interrupted on request; the trace can be resumed.
    Paused,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub schema_version: u32,
    pub direction: Direction,
    pub feature_shape: Vec<usize>,
    pub steps: Vec<SearchStep>,
    pub optimal_k: Option<usize>,
    /// Union of every chosen position.
    pub final_mask: FeatureMask,
    /// Candidate trainings performed, including failed ones.
    pub evaluations: usize,
    pub stop_reason: Option<StopReason>,
}

impl SearchTrace {
    fn new(ds: &Dataset, direction: Direction, feature_count: usize) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            direction,
            feature_shape: ds.feature_shape().to_vec(),
            steps: Vec::new(),
            optimal_k: None,
            final_mask: FeatureMask::empty(feature_count),
            evaluations: 0,
            stop_reason: None,
        }
    }

    /// Mask holding the first `k` chosen positions.
    pub fn mask_at(&self, k: usize) -> Result<FeatureMask> {
        if k > self.steps.len() {
            return Err(Error::Data(format!("trace has only {} steps", self.steps.len())));
        }
        let picks: Vec<usize> = self.steps[..k].iter().map(|s| s.chosen).collect();
        FeatureMask::from_positions(self.final_mask.feature_count(), &picks)
    }

    /// Mask at the optimal feature count.
    pub fn optimal_mask(&self) -> Result<FeatureMask> {
        self.mask_at(self.optimal_k.ok_or_else(|| Error::Data("trace has no accuracy data".into()))?)
    }

    pub fn is_complete(&self) -> bool {
        matches!(
            self.stop_reason,
            Some(StopReason::Patience | StopReason::MaxK | StopReason::Exhausted)
        )
    }

    /// Candidate costs as CSV rows `k,candidate,cost,chosen`.
    pub fn candidate_costs_csv(&self) -> String {
        let mut out = String::from("k,candidate,cost,chosen\n");
        for s in &self.steps {
            for (c, cost) in &s.candidate_costs {
                out.push_str(&format!("{},{},{},{}\n", s.k, c, cost, u8::from(*c == s.chosen)));
            }
        }
        out
    }
}

/// Argmin over the scored candidates; costs within [`COST_TIE_TOLERANCE`]
/// (relative) of the best so far keep the lower index.
pub fn select_min(costs: &BTreeMap<usize, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&c, &cost) in costs {
        match best {
            None => best = Some((c, cost)),
            Some((_, b)) => {
                if cost < b && (b - cost) > COST_TIE_TOLERANCE * b.abs().max(cost.abs()) {
                    best = Some((c, cost));
                }
            }
        }
    }
    best.map(|(c, _)| c)
}

pub struct StepOutcome {
    pub chosen: usize,
    pub candidate_costs: BTreeMap<usize, f64>,
    pub failed: Vec<usize>,
}

/// Scores every candidate added to `current` and picks the cheapest. Failed
/// trainings are recorded; the step fails only if every candidate failed.
pub fn sfs_step(
    current: &FeatureMask,
    candidates: &[usize],
    ds: &Dataset,
    scorer: &dyn CandidateScorer,
    cfg: &SFSConfig,
) -> Result<StepOutcome> {
    if candidates.is_empty() {
        return Err(Error::Config("sfs step needs at least one candidate".into()));
    }
    if let Some(c) = candidates.iter().find(|&&c| current.contains(c)) {
        return Err(Error::Config(format!("candidate {c} is already selected")));
    }
    let k = current.cardinality() + 1;
    let results: Vec<(usize, Result<f64>)> = candidates
        .par_iter()
        .map(|&c| {
            let r = current
                .with(c)
                .and_then(|m| scorer.score(ds, &io_for(&m, cfg.direction), cfg.candidate_seed(k, c)));
            (c, r)
        })
        .collect();
    let mut candidate_costs = BTreeMap::new();
    let mut failed = Vec::new();
    let mut last_err = None;
    for (c, r) in results {
        match r {
            Ok(cost) if cost.is_finite() => {
                candidate_costs.insert(c, cost);
            }
            Ok(_) => failed.push(c),
            Err(e @ (Error::Divergence { .. } | Error::NonFinite(_))) => {
                failed.push(c);
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    let chosen = select_min(&candidate_costs).ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Data("every candidate produced a non-finite cost".into()))
    })?;
    Ok(StepOutcome {
        chosen,
        candidate_costs,
        failed,
    })
}

/// Optional controls for [`sfs_search_with`].
#[derive(Default)]
pub struct SearchOptions<'a> {
    /// Restrict candidates to these positions.
    pub allowed: Option<FeatureMask>,
    /// Continue from a partial trace produced with the same config.
    pub resume: Option<SearchTrace>,
    /// Called after every completed step (checkpointing).
    pub on_step: Option<&'a mut dyn FnMut(&SearchTrace) -> Result<()>>,
    /// Pause after this many total steps.
    pub stop_after: Option<usize>,
}

pub fn sfs_search(
    ds: &Dataset,
    cfg: &SFSConfig,
    scorer: &dyn CandidateScorer,
    evaluator: Option<&dyn AccuracyEvaluator>,
) -> Result<SearchTrace> {
    sfs_search_with(ds, cfg, scorer, evaluator, SearchOptions::default())
}

/// Greedy forward search. Without an evaluator no accuracies are recorded and
/// the search runs until `max_k` or the candidates run out.
pub fn sfs_search_with(
    ds: &Dataset,
    cfg: &SFSConfig,
    scorer: &dyn CandidateScorer,
    evaluator: Option<&dyn AccuracyEvaluator>,
    mut opts: SearchOptions<'_>,
) -> Result<SearchTrace> {
    cfg.validate()?;
    let n = crate::autoencoder::MaskLayout::infer(ds.feature_shape()).feature_count(ds.feature_shape());
    if n < 2 {
        return Err(Error::Data("search needs at least two features".into()));
    }
    let allowed = opts.allowed.clone().unwrap_or_else(|| FeatureMask::full(n));
    if allowed.feature_count() != n {
        return Err(Error::Shape("allowed mask does not match the feature count".into()));
    }
    let mut trace = match opts.resume.take() {
        Some(t) => {
            if t.feature_shape != ds.feature_shape() || t.direction != cfg.direction {
                return Err(Error::Config("checkpoint does not match this search".into()));
            }
            t
        }
        None => SearchTrace::new(ds, cfg.direction, n),
    };
    trace.stop_reason = None;
    let mut mask = trace.mask_at(trace.steps.len())?;
    let (mut best, mut stale) = (f64::NEG_INFINITY, 0);
    for s in &trace.steps {
        if let Some(m) = s.accuracy_mean {
            if m > best {
                best = m;
                stale = 0;
            } else {
                stale += 1;
            }
        }
    }

    loop {
        let k = mask.cardinality();
        if evaluator.is_some() && stale >= cfg.accuracy_patience {
            trace.stop_reason = Some(StopReason::Patience);
            break;
        }
        if cfg.max_k.is_some_and(|m| k >= m) {
            trace.stop_reason = Some(StopReason::MaxK);
            break;
        }
        let remaining: Vec<usize> = (0..n).filter(|&p| allowed.contains(p) && !mask.contains(p)).collect();
        // x_out must keep at least one position.
        if remaining.is_empty() || k + 1 >= n {
            trace.stop_reason = Some(StopReason::Exhausted);
            break;
        }
        if opts.stop_after.is_some_and(|s| trace.steps.len() >= s) {
            trace.stop_reason = Some(StopReason::Paused);
            break;
        }
        let candidates = sample_candidates(&remaining, cfg, k + 1);
        let outcome = sfs_step(&mask, &candidates, ds, scorer, cfg)?;
        trace.evaluations += candidates.len();
        mask.insert(outcome.chosen)?;

        let (accuracies, mean, std) = match evaluator {
            Some(ev) => {
                let acc = ev.accuracies(ds, &io_for(&mask, cfg.direction), cfg.accuracy_seed(k + 1), cfg.repetitions_per_k)?;
                let (m, s) = mean_std(&acc);
                (acc, Some(m), Some(s))
            }
            None => (Vec::new(), None, None),
        };
        if let Some(m) = mean {
            if m > best {
                best = m;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        trace.steps.push(SearchStep {
            k: k + 1,
            chosen: outcome.chosen,
            candidate_costs: outcome.candidate_costs,
            failed: outcome.failed,
            accuracies,
            accuracy_mean: mean,
            accuracy_std: std,
        });
        trace.final_mask = mask.clone();
        trace.optimal_k = determine_optimal_k(&trace).ok();
        if let Some(cb) = opts.on_step.as_mut() {
            cb(&trace)?;
        }
    }
    trace.final_mask = mask;
    trace.optimal_k = determine_optimal_k(&trace).ok();
    Ok(trace)
}

fn sample_candidates(remaining: &[usize], cfg: &SFSConfig, k: usize) -> Vec<usize> {
    if cfg.candidate_fraction >= 1.0 {
        return remaining.to_vec();
    }
    let take = ((cfg.candidate_fraction * remaining.len() as f64).ceil() as usize).clamp(1, remaining.len());
    let mut r = rng::stream(cfg.sample_seed(k));
    let mut picked: Vec<usize> = index::sample(&mut r, remaining.len(), take)
        .into_iter()
        .map(|i| remaining[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `k` with the highest mean accuracy; ties go to the smallest `k`.
pub fn determine_optimal_k(trace: &SearchTrace) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for s in &trace.steps {
        if let Some(m) = s.accuracy_mean {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((s.k, m));
            }
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::Data("trace has no accuracy entries".into()))
}

/// Positions in the order the search added them.
pub fn feature_ranking(trace: &SearchTrace) -> Vec<usize> {
    trace.steps.iter().map(|s| s.chosen).collect()
}

mod common;

use std::collections::BTreeMap;

use common::oracle::{exhaustive_argmax, greedy_linear, linear_cost};
use common::synthetic::{generator_six, linear_six, planted_corner, unimodal};
use iosearch::autoencoder::{Direction, FeatureMask, IOArch, IOConfig};
use iosearch::data::Dataset;
use iosearch::nn::TrainConfig;
use iosearch::search::{
    expand_pick, feature_ranking, hier_search, optimize_kernels, sfs_search, sfs_search_with, sfs_step,
    AccuracyEvaluator, CandidateScorer, HierConfig, KernelSearchConfig, LinearScorer, NeuralScorer, SFSConfig,
    SearchOptions, SearchTrace, StopReason,
};
use iosearch::{Error, Result};

/// Returns a fixed cost per candidate position (the last one added).
struct TableScorer(BTreeMap<usize, f64>);

impl CandidateScorer for TableScorer {
    fn score(&self, _ds: &Dataset, io: &IOConfig, _seed: u64) -> Result<f64> {
        let last = io.x_in.positions().into_iter().find(|p| self.0.contains_key(p)).unwrap();
        match self.0[&last] {
            c if c.is_nan() => Err(Error::Divergence { epoch: 1, loss: c }),
            c => Ok(c),
        }
    }
}

/// Accuracy equals the number of selected positions inside `good`, scaled.
struct CountEvaluator(Vec<usize>);

impl AccuracyEvaluator for CountEvaluator {
    fn accuracies(&self, _ds: &Dataset, io: &IOConfig, base_seed: u64, reps: usize) -> Result<Vec<f64>> {
        let hits = self.0.iter().filter(|&&p| io.x_in.contains(p)).count() as f64;
        Ok((0..reps as u64).map(|i| hits / 10.0 + ((base_seed + i) % 7) as f64 * 1e-6).collect())
    }
}

#[test]
fn single_candidate_is_forced() {
    let ds = generator_six(40, 0);
    let scorer = TableScorer([(4, 99.0)].into());
    let out = sfs_step(&FeatureMask::empty(6), &[4], &ds, &scorer, &SFSConfig::default()).unwrap();
    assert_eq!(out.chosen, 4);
}

#[test]
fn tied_costs_pick_lower_index() {
    let ds = generator_six(40, 0);
    let scorer = TableScorer([(2, 0.25), (3, 0.25 * (1.0 + 1e-13)), (5, 0.25)].into());
    let out = sfs_step(&FeatureMask::empty(6), &[2, 3, 5], &ds, &scorer, &SFSConfig::default()).unwrap();
    assert_eq!(out.chosen, 2);
}

#[test]
fn failed_candidates_are_skipped_until_all_fail() {
    let ds = generator_six(40, 0);
    let scorer = TableScorer([(1, f64::NAN), (2, 0.5)].into());
    let out = sfs_step(&FeatureMask::empty(6), &[1, 2], &ds, &scorer, &SFSConfig::default()).unwrap();
    assert_eq!((out.chosen, out.failed), (2, vec![1]));
    let all_bad = TableScorer([(1, f64::NAN)].into());
    assert!(matches!(
        sfs_step(&FeatureMask::empty(6), &[1], &ds, &all_bad, &SFSConfig::default()),
        Err(Error::Divergence { .. })
    ));
}

#[test]
fn generating_feature_beats_noise_with_linear_decoder() {
    let ds = generator_six(300, 3);
    let out = sfs_step(&FeatureMask::empty(6), &[0, 1], &ds, &LinearScorer::default(), &SFSConfig::default()).unwrap();
    let oracle = [linear_cost(&ds, &[0]), linear_cost(&ds, &[1])];
    assert_eq!(out.chosen, exhaustive_argmax(&oracle.map(|c| -c)));
    assert_eq!(out.chosen, 0);
    for (c, want) in [(0usize, oracle[0]), (1, oracle[1])] {
        assert!((out.candidate_costs[&c] - want).abs() < 1e-9);
    }
}

#[test]
fn linear_search_matches_brute_force_greedy() {
    for seed in 0..10 {
        let ds = linear_six(300, seed, 0.1);
        let trace = sfs_search(&ds, &SFSConfig::default(), &LinearScorer::default(), None).unwrap();
        assert_eq!(trace.stop_reason, Some(StopReason::Exhausted));
        assert_eq!(feature_ranking(&trace), greedy_linear(&ds, 5), "seed {seed}");
    }
}

#[test]
fn joint_generators_enter_within_three_steps() {
    let mut hits = 0;
    for seed in 0..5 {
        let ds = linear_six(300, 50 + seed, 0.5);
        let cfg = SFSConfig {
            max_k: Some(3),
            ..Default::default()
        };
        let trace = sfs_search(&ds, &cfg, &LinearScorer::default(), None).unwrap();
        if trace.final_mask.contains(0) && trace.final_mask.contains(1) {
            hits += 1;
        }
        assert_eq!(feature_ranking(&trace), greedy_linear(&ds, 3));
    }
    assert!(hits >= 4, "{hits}/5");
}

#[test]
fn masks_nest_and_ranking_has_no_duplicates() {
    let ds = linear_six(200, 1, 0.1);
    let trace = sfs_search(&ds, &SFSConfig::default(), &LinearScorer::default(), None).unwrap();
    for k in 1..trace.steps.len() {
        let (a, b) = (trace.mask_at(k).unwrap(), trace.mask_at(k + 1).unwrap());
        assert_eq!(b.cardinality(), a.cardinality() + 1);
        assert!(a.positions().iter().all(|&p| b.contains(p)));
    }
    let mut r = feature_ranking(&trace);
    r.sort_unstable();
    r.dedup();
    assert_eq!(r.len(), trace.steps.len());
}

#[test]
fn recorded_costs_reproduce_the_argmin() {
    let ds = linear_six(200, 2, 0.1);
    let cfg = SFSConfig::default();
    let trace = sfs_search(&ds, &cfg, &LinearScorer::default(), None).unwrap();
    for (i, step) in trace.steps.iter().enumerate() {
        let before = trace.mask_at(i).unwrap();
        let candidates: Vec<usize> = step.candidate_costs.keys().copied().collect();
        let again = sfs_step(&before, &candidates, &ds, &LinearScorer::default(), &cfg).unwrap();
        assert_eq!(again.chosen, step.chosen);
        assert_eq!(again.candidate_costs, step.candidate_costs);
    }
}

#[test]
fn patience_stops_and_optimal_k_is_recorded() {
    /// Accuracy grows with the mask size up to two features, then plateaus.
    struct Plateau;
    impl AccuracyEvaluator for Plateau {
        fn accuracies(&self, _ds: &Dataset, io: &IOConfig, _seed: u64, reps: usize) -> Result<Vec<f64>> {
            Ok(vec![io.x_in.cardinality().min(2) as f64 / 10.0; reps])
        }
    }
    let ds = linear_six(200, 4, 0.1);
    let cfg = SFSConfig {
        accuracy_patience: 1,
        repetitions_per_k: 3,
        ..Default::default()
    };
    let trace = sfs_search(&ds, &cfg, &LinearScorer::default(), Some(&Plateau)).unwrap();
    assert_eq!(trace.optimal_k, Some(2));
    assert_eq!(trace.steps.len(), 3);
    assert_eq!(trace.stop_reason, Some(StopReason::Patience));
    assert!(trace.steps.iter().all(|s| s.accuracies.len() == 3));
    assert_eq!(trace.optimal_mask().unwrap(), trace.mask_at(2).unwrap());
}

#[test]
fn identical_config_gives_identical_json() {
    let ds = linear_six(200, 5, 0.1);
    let cfg = SFSConfig {
        candidate_fraction: 0.6,
        seed: 17,
        ..Default::default()
    };
    let ev = CountEvaluator(vec![0, 1]);
    let a = sfs_search(&ds, &cfg, &LinearScorer::default(), Some(&ev)).unwrap();
    let b = sfs_search(&ds, &cfg, &LinearScorer::default(), Some(&ev)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.steps.iter().all(|s| s.candidate_costs.len() < 6));
}

#[test]
fn resumed_search_matches_uninterrupted() {
    let ds = linear_six(200, 6, 0.1);
    let cfg = SFSConfig {
        accuracy_patience: 5,
        ..Default::default()
    };
    let ev = CountEvaluator(vec![0, 1, 2]);
    let full = sfs_search(&ds, &cfg, &LinearScorer::default(), Some(&ev)).unwrap();

    let mut checkpoints: Vec<SearchTrace> = Vec::new();
    let mut save = |t: &SearchTrace| {
        checkpoints.push(t.clone());
        Ok(())
    };
    let opts = SearchOptions {
        on_step: Some(&mut save),
        stop_after: Some(2),
        ..Default::default()
    };
    let partial = sfs_search_with(&ds, &cfg, &LinearScorer::default(), Some(&ev), opts).unwrap();
    assert_eq!(partial.stop_reason, Some(StopReason::Paused));
    assert_eq!(checkpoints.len(), 2);
    let json = serde_json::to_string(checkpoints.last().unwrap()).unwrap();
    let restored: SearchTrace = serde_json::from_str(&json).unwrap();
    let opts = SearchOptions {
        resume: Some(restored),
        ..Default::default()
    };
    let resumed = sfs_search_with(&ds, &cfg, &LinearScorer::default(), Some(&ev), opts).unwrap();
    assert_eq!(serde_json::to_string(&resumed).unwrap(), serde_json::to_string(&full).unwrap());
}

#[test]
fn output_search_uses_swapped_configs() {
    struct OutputCheck;
    impl CandidateScorer for OutputCheck {
        fn score(&self, _ds: &Dataset, io: &IOConfig, _seed: u64) -> Result<f64> {
            assert_eq!(io.direction, Direction::OutputSearch);
            assert!(io.x_in.cardinality() > io.x_out.cardinality() || io.x_out.cardinality() <= 3);
            Ok(io.x_out.positions().iter().sum::<usize>() as f64)
        }
    }
    let ds = linear_six(60, 0, 0.1);
    let cfg = SFSConfig {
        direction: Direction::OutputSearch,
        max_k: Some(3),
        ..Default::default()
    };
    let trace = sfs_search(&ds, &cfg, &OutputCheck, None).unwrap();
    assert_eq!(feature_ranking(&trace), vec![0, 1, 2]);
}

#[test]
fn neural_scorer_ranks_generator_above_noise() {
    let mut wins = 0;
    for seed in 0..5 {
        let ds = generator_six(300, 200 + seed);
        let scorer = NeuralScorer {
            arch: IOArch::default(),
            train: TrainConfig {
                learning_rate: 0.01,
                max_epochs: 25,
                patience: 5,
                ..Default::default()
            },
            train_subset: None,
        };
        let cfg = SFSConfig {
            max_k: Some(1),
            seed,
            ..Default::default()
        };
        let opts = SearchOptions {
            allowed: Some(FeatureMask::from_positions(6, &[0, 1]).unwrap()),
            ..Default::default()
        };
        let trace = sfs_search_with(&ds, &cfg, &scorer, None, opts).unwrap();
        if feature_ranking(&trace) == vec![0] {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn ternary_search_matches_exhaustive_scan() {
    for seed in 0..100 {
        let (peak, v) = unimodal(4, 64, seed);
        let r = optimize_kernels(|k| Ok(v[k]), &KernelSearchConfig::default()).unwrap();
        assert_eq!(r.best, peak);
        assert_eq!(r.best, 4 + exhaustive_argmax(&v[4..]));
        assert!(r.evaluations.len() < 61);
    }
}

#[test]
fn hier_search_stays_in_planted_corner() {
    let ds = planted_corner(400, 9);
    let hier = HierConfig {
        coarse_picks: Some(1),
        ..Default::default()
    };
    let cfg = SFSConfig {
        max_k: Some(3),
        ..Default::default()
    };
    // Some corner pixels are exact sums of others, so a small ridge keeps the fit defined.
    let scorer = LinearScorer { ridge: 1e-8 };
    let res = hier_search(&ds, &hier, &cfg, &scorer, None, SearchOptions::default()).unwrap();
    assert_eq!(res.levels[0].picks, vec![0]);
    let region = expand_pick(0, &[4, 4, 1], &[8, 8, 1], 2, 1);
    for p in feature_ranking(&res.trace) {
        assert!(region.contains(&p), "{p} outside the corner neighbourhood");
    }
    assert_eq!(res.total_evaluations, res.levels.iter().map(|l| l.evaluations).sum::<usize>());
}

#[test]
fn full_size_reduction_collapses_to_flat_search() {
    let ds = planted_corner(200, 10);
    let hier = HierConfig {
        reduction_factor: 8,
        ..Default::default()
    };
    let cfg = SFSConfig {
        max_k: Some(2),
        ..Default::default()
    };
    let res = hier_search(&ds, &hier, &cfg, &LinearScorer::default(), None, SearchOptions::default()).unwrap();
    let flat = sfs_search(&ds, &cfg, &LinearScorer::default(), None).unwrap();
    assert_eq!(res.levels[0].feature_shape, vec![1, 1, 1]);
    assert_eq!(feature_ranking(&res.trace), feature_ranking(&flat));
    assert_eq!(res.total_evaluations, flat.evaluations);
}

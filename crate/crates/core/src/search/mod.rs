//! Search drivers: greedy forward selection over feature positions, the
//! optimal-count rule, ternary kernel-count search and the coarse-to-fine
//! variant for images.
//!
//! Candidate scoring and accuracy evaluation sit behind the
//! [`CandidateScorer`] and [`AccuracyEvaluator`] traits so that closed-form
//! models can stand in for the neural ones.

mod evaluate;
mod hier;
mod kernel;
mod scorer;
mod sfs;

pub use evaluate::{classifier_accuracies, AccuracyEvaluator, AugmentedEvaluator, AugmentedOutcome};
pub use hier::{expand_pick, hier_search, HierConfig, HierLevel, HierResult};
pub use kernel::{optimize_kernels, KernelSearchConfig, KernelSearchResult};
pub use scorer::{CandidateScorer, LinearScorer, NeuralScorer};
pub use sfs::{
    determine_optimal_k, feature_ranking, io_for, mean_std, select_min, sfs_search, sfs_search_with, sfs_step,
    SFSConfig, SearchOptions, SearchStep, SearchTrace, StepOutcome, StopReason, COST_TIE_TOLERANCE,
    TRACE_SCHEMA_VERSION,
};

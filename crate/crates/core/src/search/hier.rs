use serde::{Deserialize, Serialize};

use super::evaluate::AccuracyEvaluator;
use super::scorer::CandidateScorer;
use super::sfs::{sfs_search_with, SFSConfig, SearchOptions, SearchTrace};
use crate::autoencoder::FeatureMask;
use crate::data::{downsample_dataset, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierConfig {
    pub reduction_factor: usize,
    /// Half-width of the block opened around each coarse pick, in pixels of
    /// the next finer level.
    pub neighborhood_radius: usize,
    pub levels: usize,
    /// Picks per coarse level; defaults to `ceil(max_k / factor)` where
    /// `factor` is that level's total reduction.
    pub coarse_picks: Option<usize>,
}

impl Default for HierConfig {
    fn default() -> Self {
        Self {
            reduction_factor: 2,
            neighborhood_radius: 1,
            levels: 2,
            coarse_picks: None,
        }
    }
}

impl HierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reduction_factor < 2 || self.levels == 0 {
            return Err(Error::Config("hier search needs reduction_factor >= 2 and levels >= 1".into()));
        }
        if self.coarse_picks == Some(0) {
            return Err(Error::Config("coarse_picks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierLevel {
    /// Total reduction of this level relative to the original images.
    pub factor: usize,
    pub feature_shape: Vec<usize>,
    /// Positions this level may choose from (`None`: all).
    pub allowed: Option<FeatureMask>,
    /// Chosen positions in this level's coordinates.
    pub picks: Vec<usize>,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierResult {
    /// Trace of the finest level, in original coordinates.
    pub trace: SearchTrace,
    pub levels: Vec<HierLevel>,
    /// Candidate trainings over all levels.
    pub total_evaluations: usize,
}

/// Region in the finer grid opened by coarse position `p`: the pick's own
/// `f × f` footprint plus a `(2r+1)²` block centred on it.
pub fn expand_pick(p: usize, coarse: &[usize], fine: &[usize], factor: usize, radius: usize) -> Vec<usize> {
    let (cw, c) = (coarse[1], coarse[2]);
    let (fh, fw) = (fine[0], fine[1]);
    let ch = p % c;
    let (i, j) = ((p / c) / cw, (p / c) % cw);
    let mut out = Vec::new();
    let (ay, ax) = ((i * factor + factor / 2).min(fh - 1), (j * factor + factor / 2).min(fw - 1));
    for y in 0..fh {
        for x in 0..fw {
            let in_foot = y / factor == i && x / factor == j;
            let in_block = y.abs_diff(ay) <= radius && x.abs_diff(ax) <= radius;
            if in_foot || in_block {
                out.push((y * fw + x) * c + ch);
            }
        }
    }
    out
}

/// Coarse-to-fine search: SFS on block-mean reduced images picks coarse
/// pixels, whose neighbourhoods bound the candidates of the next level. Only
/// the finest level evaluates accuracy.
pub fn hier_search(
    ds: &Dataset,
    hier: &HierConfig,
    cfg: &SFSConfig,
    scorer: &dyn CandidateScorer,
    evaluator: Option<&dyn AccuracyEvaluator>,
    final_opts: SearchOptions<'_>,
) -> Result<HierResult> {
    hier.validate()?;
    if ds.feature_shape().len() != 3 {
        return Err(Error::Data("hierarchical search needs (h, w, c) images".into()));
    }
    let (h, w) = (ds.feature_shape()[0], ds.feature_shape()[1]);
    if h < hier.reduction_factor || w < hier.reduction_factor {
        return Err(Error::Data(format!(
            "{h}x{w} images are smaller than reduction factor {}",
            hier.reduction_factor
        )));
    }
    if final_opts.allowed.is_some() {
        return Err(Error::Config("hier search computes its own candidate restriction".into()));
    }

    let mut levels = Vec::new();
    let mut allowed: Option<FeatureMask> = None;
    let mut total = 0;
    for depth in (1..hier.levels).rev() {
        let factor = hier.reduction_factor.pow(depth as u32);
        let coarse = downsample_dataset(ds, factor)?;
        let n = coarse.feature_count();
        let picks_wanted = match (hier.coarse_picks, cfg.max_k) {
            (Some(p), _) => p,
            (None, Some(k)) => k.div_ceil(factor),
            (None, None) => {
                return Err(Error::Config("hier search needs max_k or coarse_picks".into()));
            }
        };
        let pool: Vec<usize> = (0..n).filter(|&p| allowed.as_ref().is_none_or(|m| m.contains(p))).collect();
        let (picks, evaluations) = if picks_wanted >= pool.len() || n < 2 {
            (pool, 0)
        } else {
            let level_cfg = SFSConfig {
                max_k: Some(picks_wanted),
                ..cfg.clone()
            };
            let opts = SearchOptions {
                allowed: allowed.clone(),
                ..Default::default()
            };
            let t = sfs_search_with(&coarse, &level_cfg, scorer, None, opts)
                .map_err(|e| e.in_stage(format!("hier level x{factor}")))?;
            (super::sfs::feature_ranking(&t), t.evaluations)
        };
        total += evaluations;

        let finer_factor = factor / hier.reduction_factor;
        let finer_shape = if finer_factor == 1 {
            ds.feature_shape().to_vec()
        } else {
            downsample_dataset(&ds.select(&[0]), finer_factor)?.feature_shape().to_vec()
        };
        let mut next = FeatureMask::empty(finer_shape.iter().product());
        for &p in &picks {
            for q in expand_pick(p, coarse.feature_shape(), &finer_shape, hier.reduction_factor, hier.neighborhood_radius) {
                next.insert(q)?;
            }
        }
        levels.push(HierLevel {
            factor,
            feature_shape: coarse.feature_shape().to_vec(),
            allowed: allowed.clone(),
            picks,
            evaluations,
        });
        allowed = Some(next);
    }

    let opts = SearchOptions {
        allowed: allowed.clone(),
        ..final_opts
    };
    let trace = sfs_search_with(ds, cfg, scorer, evaluator, opts)?;
    total += trace.evaluations;
    levels.push(HierLevel {
        factor: 1,
        feature_shape: ds.feature_shape().to_vec(),
        allowed,
        picks: super::sfs::feature_ranking(&trace),
        evaluations: trace.evaluations,
    });
    Ok(HierResult {
        trace,
        levels,
        total_evaluations: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_two_radius_one_opens_three_by_three() {
        let mut region = expand_pick(0, &[2, 2, 1], &[4, 4, 1], 2, 1);
        region.sort_unstable();
        assert_eq!(region, vec![0, 1, 2, 4, 5, 6, 8, 9, 10]);
    }

    #[test]
    fn single_coarse_pixel_covers_everything() {
        let region = expand_pick(0, &[1, 1, 1], &[14, 14, 1], 14, 1);
        assert_eq!(region.len(), 196);
    }

    #[test]
    fn edge_picks_stay_in_bounds() {
        // 5 wide reduces to 3; the last coarse column covers one fine column.
        let region = expand_pick(2, &[3, 3, 1], &[5, 5, 1], 2, 1);
        assert!(region.iter().all(|&q| q < 25));
        assert!(region.contains(&4));
    }

    #[test]
    fn channels_are_kept_apart() {
        let region = expand_pick(1, &[2, 2, 2], &[4, 4, 2], 2, 0);
        assert!(region.iter().all(|q| q % 2 == 1));
        assert_eq!(region.len(), 4);
    }
}

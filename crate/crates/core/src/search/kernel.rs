use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer bounds for the kernel-count search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSearchConfig {
    pub a: usize,
    pub b: usize,
    /// Ternary narrowing stops once `b - a` is at most this; values below 2
    /// act as 2.
    pub min_interval: usize,
}

impl Default for KernelSearchConfig {
    fn default() -> Self {
        Self {
            a: 4,
            b: 64,
            min_interval: 2,
        }
    }
}

impl KernelSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a == 0 || self.a >= self.b {
            return Err(Error::Config(format!(
                "kernel search needs 0 < a < b, got [{}, {}]",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSearchResult {
    pub best: usize,
    /// Every objective value computed, keyed by kernel count.
    pub evaluations: BTreeMap<usize, f64>,
    pub ternary_iterations: usize,
}

/// Maximises a unimodal objective over `[a, b]` by ternary narrowing, then an
/// exhaustive scan of what is left. Ties go to the smaller kernel count.
pub fn optimize_kernels(
    mut objective: impl FnMut(usize) -> Result<f64>,
    cfg: &KernelSearchConfig,
) -> Result<KernelSearchResult> {
    cfg.validate()?;
    let mut memo: BTreeMap<usize, f64> = BTreeMap::new();
    let mut eval = |x: usize, memo: &mut BTreeMap<usize, f64>| -> Result<f64> {
        if let Some(v) = memo.get(&x) {
            return Ok(*v);
        }
        let v = objective(x)?;
        memo.insert(x, v);
        Ok(v)
    };
    let (mut a, mut b) = (cfg.a, cfg.b);
    let mut iterations = 0;
    while b - a > cfg.min_interval.max(2) {
        let third = (b - a) / 3;
        let (x1, x2) = (a + third, b - third);
        let (f1, f2) = (eval(x1, &mut memo)?, eval(x2, &mut memo)?);
        if f1 < f2 {
            a = x1 + 1;
        } else if f1 > f2 {
            b = x2 - 1;
        } else {
            b = x2;
        }
        iterations += 1;
    }
    let mut best = (a, eval(a, &mut memo)?);
    for x in a + 1..=b {
        let v = eval(x, &mut memo)?;
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(KernelSearchResult {
        best: best.0,
        evaluations: memo,
        ternary_iterations: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_peak_at_seventeen() {
        let f = |x: usize| Ok(-((x as f64) - 17.0).abs());
        assert_eq!(optimize_kernels(f, &KernelSearchConfig::default()).unwrap().best, 17);
    }

    #[test]
    fn constant_objective_returns_lower_bound() {
        let r = optimize_kernels(|_| Ok(0.5), &KernelSearchConfig::default()).unwrap();
        assert_eq!(r.best, 4);
    }

    #[test]
    fn narrow_interval_is_scanned_directly() {
        let cfg = KernelSearchConfig {
            a: 4,
            b: 6,
            min_interval: 2,
        };
        let r = optimize_kernels(|x| Ok(x as f64), &cfg).unwrap();
        assert_eq!((r.best, r.ternary_iterations, r.evaluations.len()), (6, 0, 3));
    }

    #[test]
    fn rejects_empty_interval() {
        let cfg = KernelSearchConfig {
            a: 5,
            b: 5,
            min_interval: 2,
        };
        assert!(optimize_kernels(|_| Ok(0.0), &cfg).is_err());
    }
}

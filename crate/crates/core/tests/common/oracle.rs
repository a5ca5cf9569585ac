//! Independent reference implementations built on nalgebra.

use iosearch::data::{Dataset, Split};
use nalgebra::DMatrix;

fn design(ds: &Dataset, split: Split, cols: &[usize]) -> DMatrix<f64> {
    let idx = ds.indices(split);
    DMatrix::from_fn(idx.len(), cols.len() + 1, |r, c| {
        if c == cols.len() {
            1.0
        } else {
            ds.features.instance(idx[r])[cols[c]]
        }
    })
}

fn values(ds: &Dataset, split: Split, cols: &[usize]) -> DMatrix<f64> {
    let idx = ds.indices(split);
    DMatrix::from_fn(idx.len(), cols.len(), |r, c| ds.features.instance(idx[r])[cols[c]])
}

/// Validation RMSE of a least-squares linear decoder (with intercept) from
/// `inputs` to every other position, fitted by SVD on the training split.
pub fn linear_cost(ds: &Dataset, inputs: &[usize]) -> f64 {
    let n = ds.feature_count();
    let outputs: Vec<usize> = (0..n).filter(|p| !inputs.contains(p)).collect();
    let a = design(ds, Split::Train, inputs);
    let y = values(ds, Split::Train, &outputs);
    let coef = a.svd(true, true).solve(&y, 1e-14).expect("svd solve");
    let pred = design(ds, Split::Val, inputs) * coef;
    let diff = pred - values(ds, Split::Val, &outputs);
    (diff.norm_squared() / diff.len() as f64).sqrt()
}

/// Plain greedy forward selection with the linear decoder: at each step try
/// every unselected position and keep the strictly cheapest (first on ties).
pub fn greedy_linear(ds: &Dataset, steps: usize) -> Vec<usize> {
    let n = ds.feature_count();
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..steps {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..n {
            if chosen.contains(&c) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(c);
            let cost = linear_cost(ds, &trial);
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((c, cost));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen
}

/// Index of the maximum, first on ties.
pub fn exhaustive_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

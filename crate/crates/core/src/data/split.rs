use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Train:val:test proportions; only the ratios between parts matter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self {
            train: 67.0,
            val: 22.0,
            test: 11.0,
        }
    }
}

impl SplitRatio {
    fn fractions(&self) -> Result<[f64; 3]> {
        let parts = [self.train, self.val, self.test];
        let total: f64 = parts.iter().sum();
        if parts.iter().any(|p| *p < 0.0 || !p.is_finite()) || total <= 0.0 {
            return Err(Error::Config(format!("invalid split ratio {self:?}")));
        }
        Ok(parts.map(|p| p / total))
    }
}

/// Largest-remainder apportionment of `n` items; remainder ties go to the
/// earlier part.
pub fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assigns split tags. Split totals follow [`apportion`]; when stratified,
/// each class receives the floor or ceiling of its own quota per split.
pub fn split_dataset(ds: &Dataset, ratio: SplitRatio, stratified: bool, seed: u64) -> Result<Dataset> {
    let fr = ratio.fractions()?;
    let n = ds.instances();
    let totals = apportion(n, &fr);
    let mut rng = rng::stream(rng::derive(seed, &[0x5b1d]));
    let mut tags = vec![Split::Train; n];

    if !stratified {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut it = order.into_iter();
        for (part, &count) in Split::ALL.iter().zip(&totals) {
            for i in it.by_ref().take(count) {
                tags[i] = *part;
            }
        }
        return Ok(Dataset { split: tags, ..ds.clone() });
    }

    if n < ds.class_count {
        return Err(Error::Data(format!(
            "{n} instances are too few to stratify {} classes",
            ds.class_count
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        members[l].push(i);
    }
    for m in &mut members {
        m.shuffle(&mut rng);
    }

    // Floors of the per-class quotas, then hand out the per-class remainders
    // one unit per (class, split) so totals still match `totals`.
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(members.len());
    let mut fracs: Vec<[f64; 3]> = Vec::with_capacity(members.len());
    for m in &members {
        let q = fr.map(|f| f * m.len() as f64);
        alloc.push(q.map(|v| v.floor() as usize));
        fracs.push(q.map(|v| v - v.floor()));
    }
    let mut demand: [usize; 3] = [0, 1, 2].map(|s| totals[s] - alloc.iter().map(|a| a[s]).sum::<usize>());
    let mut extra = vec![[false; 3]; members.len()];
    let mut classes: Vec<usize> = (0..members.len()).collect();
    let remainder = |c: usize, alloc: &[[usize; 3]]| members[c].len() - alloc[c].iter().sum::<usize>();
    classes.sort_by_key(|&c| std::cmp::Reverse(remainder(c, &alloc)));
    for c in classes {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| fracs[c][b].partial_cmp(&fracs[c][a]).unwrap().then(a.cmp(&b)));
        for _ in 0..remainder(c, &alloc) {
            match order.iter().find(|&&s| !extra[c][s] && demand[s] > 0) {
                Some(&s) => {
                    extra[c][s] = true;
                    demand[s] -= 1;
                }
                None if place_unit(c, &mut extra, &mut demand) => {}
                None => return Err(Error::Data("cannot balance stratified split counts".into())),
            }
        }
    }
    for (a, e) in alloc.iter_mut().zip(&extra) {
        for s in 0..3 {
            a[s] += usize::from(e[s]);
        }
    }
    for (m, a) in members.iter().zip(&alloc) {
        let mut it = m.iter();
        for (part, &count) in Split::ALL.iter().zip(a) {
            for &i in it.by_ref().take(count) {
                tags[i] = *part;
            }
        }
    }
    Ok(Dataset { split: tags, ..ds.clone() })
}

/// Gives class `c0` one more unit by shifting other classes' extra units
/// along an alternating path that ends at a split with open demand. Every
/// class holds at most one extra unit per split.
fn place_unit(c0: usize, extra: &mut [[bool; 3]], demand: &mut [usize; 3]) -> bool {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; extra.len()];
    let mut seen = vec![false; extra.len()];
    seen[c0] = true;
    let mut queue = std::collections::VecDeque::from([c0]);
    while let Some(c) = queue.pop_front() {
        for s in 0..3 {
            if extra[c][s] {
                continue;
            }
            if demand[s] > 0 {
                demand[s] -= 1;
                let (mut cur, mut take) = (c, s);
                loop {
                    extra[cur][take] = true;
                    match parent[cur] {
                        Some((prev, given_up)) => {
                            extra[cur][given_up] = false;
                            cur = prev;
                            take = given_up;
                        }
                        None => return true,
                    }
                }
            }
            for c2 in 0..extra.len() {
                if !seen[c2] && extra[c2][s] {
                    seen[c2] = true;
                    parent[c2] = Some((c, s));
                    queue.push_back(c2);
                }
            }
        }
    }
    false
}

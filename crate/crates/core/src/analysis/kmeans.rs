use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const KMEANS_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<[f64; 2]>,
    pub assignments: Vec<usize>,
    /// Inertia after the initial assignment and after every Lloyd update.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap()
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Nearest centroid per point (lowest index on ties) and the total inertia.
fn assign(points: &[[f64; 2]], centroids: &[[f64; 2]]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .iter()
        .map(|&p| {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for (j, &c) in centroids.iter().enumerate() {
                let d = dist2(p, c);
                if d < best_d {
                    (best, best_d) = (j, d);
                }
            }
            inertia += best_d;
            best
        })
        .collect();
    (labels, inertia)
}

/// k-means++ seeding: the first centre uniformly, the rest with probability
/// proportional to squared distance. Exhausted distance mass falls back to
/// the first point not yet used.
fn seed_centroids(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng::stream(seed);
    let mut chosen = vec![r.random_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(points[i], points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Lloyd iterations from a seeded k-means++ start, until the assignment stops
/// changing or [`KMEANS_MAX_ITERATIONS`] updates. Empty clusters keep their
/// previous centre.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {} points, got k = {k}", points.len())));
    }
    let mut centroids = seed_centroids(points, k, seed);
    let (mut assignments, inertia) = assign(points, &centroids);
    let mut inertia_history = vec![inertia];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERATIONS {
        let mut sums = vec![[0.0, 0.0, 0.0]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            sums[a][2] += 1.0;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                *c = [s[0] / s[2], s[1] / s[2]];
            }
        }
        iterations += 1;
        let (next, inertia) = assign(points, &centroids);
        inertia_history.push(inertia);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    Ok(KMeans {
        centroids,
        assignments,
        inertia_history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_k_gives_zero_inertia() {
        let pts = [[0.0, 0.0], [1.0, 5.0], [3.0, 2.0], [7.0, 7.0]];
        let km = kmeans(&pts, 4, 3).unwrap();
        assert_eq!(km.inertia(), 0.0);
        let mut a = km.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_pairs_find_group_means() {
        let pts = [[0.0, 0.0], [0.0, 2.0], [10.0, 10.0], [12.0, 10.0]];
        for seed in 0..10 {
            let km = kmeans(&pts, 2, seed).unwrap();
            let mut c = km.centroids.clone();
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(c, vec![[0.0, 1.0], [11.0, 10.0]]);
        }
    }

    #[test]
    fn duplicate_points_still_seed_distinct_slots() {
        let pts = [[1.0, 1.0]; 3];
        let km = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(km.inertia(), 0.0);
    }

    #[test]
    fn rejects_k_above_point_count() {
        assert!(kmeans(&[[0.0, 0.0]], 2, 0).is_err());
        assert!(kmeans(&[[0.0, 0.0]], 0, 0).is_err());
    }
}

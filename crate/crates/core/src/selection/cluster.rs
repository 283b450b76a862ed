//! k-means with k-means++ seeding, and nearest-neighbour lookup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_LLOYD: usize = 300;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, ties to the lowest index.
pub fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(cen, p);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn plus_plus_init(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centroids = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(x[pick].clone());
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(sq_dist(p, &x[pick]));
        }
    }
    centroids
}

/// One Lloyd run; `None` if a cluster empties.
fn lloyd(x: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Option<KMeans> {
    let k = centroids.len();
    let dim = x[0].len();
    let mut assignment: Vec<usize> = x.iter().map(|p| nearest(&centroids, p)).collect();
    for _ in 0..MAX_LLOYD {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in x.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        let next: Vec<usize> = x.iter().map(|p| nearest(&centroids, p)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let inertia = x
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    Some(KMeans {
        centroids,
        assignment,
        inertia,
    })
}

/// Best of `restarts` seeded k-means++ runs by inertia. Runs that empty a
/// cluster are discarded; `k` is capped at the number of distinct points.
pub fn kmeans(x: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> KMeans {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in x {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    let k = k.clamp(1, distinct.len().max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(x, k, &mut rng);
        if let Some(run) = lloyd(x, init) {
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
        }
    }
    best.unwrap_or_else(|| {
        // every restart emptied a cluster: fall back to distinct points as centroids
        let centroids: Vec<Vec<f64>> = distinct.iter().take(k).map(|p| (*p).clone()).collect();
        let assignment: Vec<usize> = x.iter().map(|p| nearest(&centroids, p)).collect();
        let inertia = x
            .iter()
            .zip(&assignment)
            .map(|(p, &c)| sq_dist(p, &centroids[c]))
            .sum();
        KMeans {
            centroids,
            assignment,
            inertia,
        }
    })
}

/// Indices of the `k` points nearest to `q`, ties by index.
pub fn k_nearest(x: &[Vec<f64>], q: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = x
        .iter()
        .enumerate()
        .map(|(i, p)| (sq_dist(p, q), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, i)| i).collect()
}

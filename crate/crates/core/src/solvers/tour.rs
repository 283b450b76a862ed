//! Tour construction and improvement.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Budget, Progress};
use crate::evaluation::{add_work, Tour};
use crate::instance::TtpInstance;

/// Greedy nearest-neighbour tour from city 0. Equal distances are broken by
/// a seed-derived priority order.
pub fn nearest_neighbor_tour(inst: &TtpInstance, seed: u64) -> Tour {
    Tour::new(nearest_neighbor_order(inst, 0, seed))
}

/// Nearest-neighbour cycle grown from `start`, rotated to begin at city 0.
pub fn nearest_neighbor_from(inst: &TtpInstance, start: usize, seed: u64) -> Tour {
    Tour::rotated_to_start(nearest_neighbor_order(inst, start, seed))
}

fn nearest_neighbor_order(inst: &TtpInstance, start: usize, seed: u64) -> Vec<usize> {
    let n = inst.dimension();
    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    visited[current] = true;
    order.push(current);
    for _ in 1..n {
        add_work(n as u64);
        let mut best: Option<(f64, usize, usize)> = None;
        for c in (0..n).filter(|&c| !visited[c]) {
            let key = (inst.dist(current, c), priority[c], c);
            if best.is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
                best = Some(key);
            }
        }
        let (_, _, next) = best.expect("unvisited city remains");
        visited[next] = true;
        order.push(next);
        current = next;
    }
    order
}

/// First-improvement 2-opt. Each applied move counts as one iteration.
pub fn two_opt(inst: &TtpInstance, tour: &Tour, budget: Budget) -> Tour {
    let mut progress = Progress::new(budget);
    two_opt_tracked(inst, tour, &mut progress)
}

pub(crate) fn two_opt_tracked(inst: &TtpInstance, tour: &Tour, progress: &mut Progress) -> Tour {
    let mut t = tour.order.clone();
    let n = t.len();
    if n < 4 || progress.exhausted() {
        return Tour::new(t);
    }
    let mut improved = true;
    let mut checks: u64 = 0;
    'outer: while improved {
        improved = false;
        for i in 0..n - 2 {
            let a = t[i];
            let b = t[i + 1];
            let d_ab = inst.dist(a, b);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let c = t[j];
                let d = t[(j + 1) % n];
                let delta = inst.dist(a, c) + inst.dist(b, d) - d_ab - inst.dist(c, d);
                checks += 1;
                if delta < -1e-10 {
                    add_work(checks);
                    checks = 0;
                    if !progress.tick() {
                        break 'outer;
                    }
                    t[i + 1..=j].reverse();
                    improved = true;
                    continue 'outer;
                }
                if checks >= 1024 {
                    add_work(checks);
                    checks = 0;
                    if progress.exhausted() {
                        break 'outer;
                    }
                }
            }
        }
    }
    add_work(checks);
    Tour::new(t)
}

//! Hill-climbers: packing bit flips on a fixed tour, and city insertion on a
//! fixed packing plan. All of them are monotone in the objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use super::{Budget, Progress};
use crate::evaluation::{city_weights, profit, travel_time_raw, PackingEvaluator, Solution, Tour};
use crate::instance::TtpInstance;

fn evaluator<'a>(inst: &'a TtpInstance, start: &Solution) -> PackingEvaluator<'a> {
    PackingEvaluator::new(inst, &start.tour, &start.plan).expect("start solution must be valid")
}

/// Random local search: flips one uniformly chosen packing bit per iteration
/// and keeps the flip if the plan stays feasible and `Z` does not decrease.
pub fn rls(inst: &TtpInstance, start: &Solution, budget: Budget, seed: u64) -> Solution {
    rls_tracked(inst, start.clone(), seed, &mut Progress::new(budget))
}

pub(crate) fn rls_tracked(
    inst: &TtpInstance,
    start: Solution,
    seed: u64,
    progress: &mut Progress,
) -> Solution {
    let m = inst.num_items();
    if m == 0 {
        return start;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev = evaluator(inst, &start);
    progress.observe(ev.objective());
    while progress.tick() {
        let k = rng.random_range(0..m);
        if let Some(z) = ev.try_flip(k) {
            if z >= ev.objective() {
                ev.apply_flips(&[k]);
                progress.observe(z);
            }
        }
    }
    ev.into_solution()
}

/// (1+1)-EA: every bit flips independently with probability `1/m`, forcing at
/// least one flip; infeasible or worse offspring are discarded.
pub fn one_plus_one_ea(
    inst: &TtpInstance,
    start: &Solution,
    budget: Budget,
    seed: u64,
) -> Solution {
    ea_tracked(inst, start.clone(), seed, &mut Progress::new(budget))
}

pub(crate) fn ea_tracked(
    inst: &TtpInstance,
    start: Solution,
    seed: u64,
    progress: &mut Progress,
) -> Solution {
    let m = inst.num_items();
    if m == 0 {
        return start;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Geometric::new(1.0 / m as f64).expect("valid probability");
    let mut ev = evaluator(inst, &start);
    progress.observe(ev.objective());
    let mut flips = Vec::new();
    while progress.tick() {
        flips.clear();
        let mut k = gap.sample(&mut rng);
        while k < m as u64 {
            flips.push(k as usize);
            k += 1 + gap.sample(&mut rng);
        }
        if flips.is_empty() {
            flips.push(rng.random_range(0..m));
        }
        if let Some(z) = ev.try_flips(&flips) {
            if z >= ev.objective() {
                ev.apply_flips(&flips);
                progress.observe(z);
            }
        }
    }
    ev.into_solution()
}

/// Deterministic sweeps over all packing bits, keeping strict improvements,
/// until a full sweep changes nothing.
pub fn bitflip(inst: &TtpInstance, start: &Solution, budget: Budget) -> Solution {
    bitflip_tracked(inst, start.clone(), &mut Progress::new(budget))
}

pub(crate) fn bitflip_tracked(
    inst: &TtpInstance,
    start: Solution,
    progress: &mut Progress,
) -> Solution {
    let mut ev = evaluator(inst, &start);
    progress.observe(ev.objective());
    'sweeps: loop {
        let mut changed = false;
        for k in 0..inst.num_items() {
            if !progress.tick() {
                break 'sweeps;
            }
            if let Some(z) = ev.try_flip(k) {
                if z > ev.objective() {
                    ev.apply_flips(&[k]);
                    progress.observe(z);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    ev.into_solution()
}

/// Tries moving single cities to other tour positions, accepting a move iff
/// `Z` strictly improves. One candidate evaluation per iteration.
pub fn insertion(inst: &TtpInstance, sol: &Solution, budget: Budget) -> Solution {
    insertion_tracked(inst, sol.clone(), &mut Progress::new(budget))
}

pub(crate) fn insertion_tracked(
    inst: &TtpInstance,
    sol: Solution,
    progress: &mut Progress,
) -> Solution {
    let n = inst.dimension();
    if n < 3 {
        return sol;
    }
    let cw = city_weights(inst, &sol.plan);
    let gain = profit(inst, &sol.plan);
    let score = |order: &[usize]| -> f64 {
        gain - inst.renting_rate * travel_time_raw(inst, order, &cw).expect("feasible plan")
    };
    let mut order = sol.tour.order.clone();
    let mut best = score(&order);
    progress.observe(best);
    let mut candidate = order.clone();
    'passes: loop {
        let mut changed = false;
        for from in 1..n {
            for to in 1..n {
                if to == from {
                    continue;
                }
                if !progress.tick() {
                    break 'passes;
                }
                candidate.clear();
                candidate.extend_from_slice(&order);
                let city = candidate.remove(from);
                candidate.insert(to, city);
                let z = score(&candidate);
                if z > best {
                    best = z;
                    std::mem::swap(&mut order, &mut candidate);
                    progress.observe(z);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Solution::from_parts(inst, Tour::new(order), sol.plan, best)
}

//! Restart heuristic: fresh 2-opt tours packed with `pack_iterative`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::packing::pack_iterative;
use super::tour::{nearest_neighbor_from, two_opt_tracked};
use super::{Budget, Progress};
use crate::evaluation::Solution;
use crate::instance::TtpInstance;

/// Repeats: nearest-neighbour tour grown from a random city, 2-opt, then
/// `pack_iterative` on the tour and on its reversal, keeping the global best.
/// One restart is one iteration. `None` if not even one restart completes
/// within the budget; [`run_solver`](super::run_solver) reports that as a
/// timeout.
pub fn s5(inst: &TtpInstance, budget: Budget, seed: u64) -> Option<Solution> {
    let mut progress = Progress::new(budget);
    let best = s5_tracked(inst, seed, &mut progress);
    let ms = match budget {
        Budget::Millis(ms) => ms as f64,
        _ => 0.0,
    };
    best.filter(|_| progress.feasible_in_budget(ms, 0.0))
}

pub(crate) fn s5_tracked(
    inst: &TtpInstance,
    seed: u64,
    progress: &mut Progress,
) -> Option<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inst.dimension();
    let mut best: Option<Solution> = None;
    while progress.tick() {
        let start = if best.is_none() {
            0
        } else {
            rng.random_range(0..n)
        };
        let tour = nearest_neighbor_from(inst, start, rng.random());
        let tour = two_opt_tracked(inst, &tour, &mut progress.sub());
        for t in [tour.reversed(), tour] {
            let plan = pack_iterative(inst, &t);
            let sol = Solution::evaluate(inst, t, plan).expect("packing is feasible");
            if best.as_ref().is_none_or(|b| sol.objective > b.objective) {
                progress.observe(sol.objective);
                best = Some(sol);
            }
        }
        progress.mark_feasible();
    }
    best
}

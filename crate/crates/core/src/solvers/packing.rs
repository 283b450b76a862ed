//! Constructive packing heuristics for a fixed tour.

use crate::evaluation::{add_work, PackingEvaluator, PackingPlan, Tour};
use crate::instance::TtpInstance;

/// Number of exponents on the log-spaced grid in [0.1, 10].
const ALPHA_GRID: usize = 21;
/// Extra exponents probed around the best grid point.
const ALPHA_REFINE: usize = 10;

fn evaluator<'a>(inst: &'a TtpInstance, tour: &Tour) -> PackingEvaluator<'a> {
    PackingEvaluator::new(inst, tour, &PackingPlan::empty(inst.num_items()))
        .expect("valid tour and empty plan")
}

/// Adds items in the given order whenever they fit and the objective improves
/// (or, unless `strict`, stays equal).
fn greedy_fill(ev: &mut PackingEvaluator<'_>, order: &[usize], strict: bool) {
    let mut current = ev.objective();
    for &k in order {
        if let Some(z) = ev.try_flip(k) {
            if z > current || (!strict && z == current) {
                ev.apply_flips(&[k]);
                current = ev.objective();
            }
        }
    }
}

/// Scores every item by its profit minus the rent for carrying it alone from
/// its city to the end of the tour, then adds items in descending score
/// while they fit and the objective does not decrease.
pub fn sh_pack(inst: &TtpInstance, tour: &Tour) -> PackingPlan {
    let mut ev = evaluator(inst, tour);
    let nu = inst.nu();
    let scores: Vec<f64> = inst
        .items
        .iter()
        .enumerate()
        .map(|(k, item)| {
            let rest = ev.remaining_distance(k);
            let extra = rest / (inst.max_speed - nu * item.weight) - rest / inst.max_speed;
            item.profit - inst.renting_rate * extra
        })
        .collect();
    let order = descending(&scores);
    greedy_fill(&mut ev, &order, false);
    ev.plan().clone()
}

/// Greedy packing with the item score `p^a / (w^a * d)` swept over a grid of
/// exponents `a`, where `d` is the remaining tour distance from the item's
/// city. Returns the best plan seen.
pub fn pack_iterative(inst: &TtpInstance, tour: &Tour) -> PackingPlan {
    let base = evaluator(inst, tour);
    let m = inst.num_items();
    let rest: Vec<f64> = (0..m)
        .map(|k| base.remaining_distance(k).max(f64::MIN_POSITIVE))
        .collect();
    let log_ratio: Vec<f64> = inst
        .items
        .iter()
        .map(|it| (it.profit / it.weight).ln())
        .collect();

    let run = |alpha: f64| -> (f64, PackingPlan) {
        // log-score keeps large exponents finite
        let scores: Vec<f64> = (0..m)
            .map(|k| alpha * log_ratio[k] - rest[k].ln())
            .collect();
        let mut ev = base.clone();
        greedy_fill(&mut ev, &descending(&scores), true);
        (ev.objective(), ev.plan().clone())
    };

    let (lo, hi) = (0.1f64.ln(), 10f64.ln());
    let grid: Vec<f64> = (0..ALPHA_GRID)
        .map(|i| (lo + (hi - lo) * i as f64 / (ALPHA_GRID - 1) as f64).exp())
        .collect();
    let mut best = (f64::NEG_INFINITY, PackingPlan::empty(m));
    let mut best_idx = 0;
    for (i, &alpha) in grid.iter().enumerate() {
        let cand = run(alpha);
        if cand.0 > best.0 {
            best = cand;
            best_idx = i;
        }
    }

    // golden-section probing in log-alpha between the neighbours of the best grid point
    let mut consider = |cand: (f64, PackingPlan)| -> f64 {
        let z = cand.0;
        if z > best.0 {
            best = cand;
        }
        z
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = grid[best_idx.saturating_sub(1)].ln();
    let mut b = grid[(best_idx + 1).min(ALPHA_GRID - 1)].ln();
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = consider(run(c.exp()));
    let mut fd = consider(run(d.exp()));
    for _ in 2..ALPHA_REFINE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = consider(run(c.exp()));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = consider(run(d.exp()));
        }
    }
    best.1
}

/// Indices sorted by descending score, ties by lowest index.
fn descending(scores: &[f64]) -> Vec<usize> {
    add_work(scores.len() as u64);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

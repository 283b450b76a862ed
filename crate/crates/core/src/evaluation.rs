//! The TTP objective, solution validation and an incremental evaluator for
//! packing-plan moves on a fixed tour.
//!
//! The objective for a tour `x_1..x_n` and packing plan is
//!
//! ```text
//! Z = sum(picked profits) - R * ( sum_i d(x_i, x_{i+1}) / (v_max - nu * W_{x_i}) )
//! ```
//!
//! where the sum wraps back to `x_1`, `W_{x_i}` is the load when leaving
//! `x_i` and `nu = (v_max - v_min) / W`.

use std::cell::Cell;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::TtpInstance;

thread_local! {
    static WORK: Cell<u64> = const { Cell::new(0) };
}

/// Elementary operations (distance lookups, per-city load updates) performed
/// so far by the calling thread. Deterministic budgets are charged against it.
pub fn work_counter() -> u64 {
    WORK.with(Cell::get)
}

pub(crate) fn add_work(units: u64) {
    WORK.with(|w| w.set(w.get().wrapping_add(units)));
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("packing weight {total} exceeds capacity {capacity}")]
    CapacityExceeded { total: f64, capacity: f64 },
    #[error("invalid tour: {0:?}")]
    InvalidTour(Vec<Violation>),
    #[error("packing plan has {found} entries, instance has {expected} items")]
    PlanLength { expected: usize, found: usize },
    #[error("cannot parse solution: {0}")]
    Parse(String),
}

/// A closed tour given as 0-based city indices, starting at city 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
}

impl Tour {
    pub fn new(order: Vec<usize>) -> Self {
        Tour { order }
    }

    /// Builds a tour from 1-based city ids.
    pub fn from_ids(ids: &[usize]) -> Self {
        Tour {
            order: ids.iter().map(|&c| c.wrapping_sub(1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The same cycle traversed in the opposite direction, still starting at city 0.
    pub fn reversed(&self) -> Tour {
        let mut order = Vec::with_capacity(self.order.len());
        if let Some(&first) = self.order.first() {
            order.push(first);
            order.extend(self.order[1..].iter().rev());
        }
        Tour { order }
    }

    /// Rotates the cycle so that city 0 comes first.
    pub fn rotated_to_start(mut order: Vec<usize>) -> Tour {
        if let Some(pos) = order.iter().position(|&c| c == 0) {
            order.rotate_left(pos);
        }
        Tour { order }
    }

    pub fn length(&self, inst: &TtpInstance) -> f64 {
        let n = self.order.len();
        (0..n)
            .map(|i| inst.dist(self.order[i], self.order[(i + 1) % n]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackingPlan {
    pub picked: Vec<bool>,
}

impl PackingPlan {
    pub fn empty(m: usize) -> Self {
        PackingPlan {
            picked: vec![false; m],
        }
    }

    /// Builds a plan from 1-based item ids.
    pub fn from_ids(m: usize, ids: &[usize]) -> Self {
        let mut plan = Self::empty(m);
        for &id in ids {
            plan.picked[id - 1] = true;
        }
        plan
    }

    pub fn picked_ids(&self) -> Vec<usize> {
        self.picked
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(k, _)| k + 1)
            .collect()
    }

    pub fn count(&self) -> usize {
        self.picked.iter().filter(|&&p| p).count()
    }
}

/// One problem found by [`validate`]. City indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    WrongLength { expected: usize, found: usize },
    WrongStart(usize),
    CityOutOfRange(usize),
    DuplicateCity(usize),
    MissingCity(usize),
    PlanLength { expected: usize, found: usize },
    CapacityExceeded { total: f64, capacity: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, found } => {
                write!(f, "tour visits {found} positions, expected {expected}")
            }
            Violation::WrongStart(c) => write!(f, "tour starts at city {} instead of 1", c + 1),
            Violation::CityOutOfRange(c) => write!(f, "city {} does not exist", c.wrapping_add(1)),
            Violation::DuplicateCity(c) => write!(f, "city {} visited more than once", c + 1),
            Violation::MissingCity(c) => write!(f, "city {} never visited", c + 1),
            Violation::PlanLength { expected, found } => {
                write!(f, "plan has {found} entries, expected {expected}")
            }
            Violation::CapacityExceeded { total, capacity } => {
                write!(f, "packed weight {total} exceeds capacity {capacity}")
            }
        }
    }
}

fn tour_violations(inst: &TtpInstance, tour: &Tour) -> Vec<Violation> {
    let n = inst.dimension();
    let mut out = Vec::new();
    if tour.order.len() != n {
        out.push(Violation::WrongLength {
            expected: n,
            found: tour.order.len(),
        });
    }
    if let Some(&first) = tour.order.first() {
        if first != 0 {
            out.push(Violation::WrongStart(first));
        }
    }
    let mut seen = vec![false; n];
    for &c in &tour.order {
        if c >= n {
            out.push(Violation::CityOutOfRange(c));
        } else if seen[c] {
            if !out.contains(&Violation::DuplicateCity(c)) {
                out.push(Violation::DuplicateCity(c));
            }
        } else {
            seen[c] = true;
        }
    }
    out.extend(
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(c, _)| Violation::MissingCity(c)),
    );
    out
}

/// Lists every problem with a candidate solution; empty means valid.
pub fn validate(inst: &TtpInstance, tour: &Tour, plan: &PackingPlan) -> Vec<Violation> {
    let mut out = tour_violations(inst, tour);
    let m = inst.num_items();
    if plan.picked.len() != m {
        out.push(Violation::PlanLength {
            expected: m,
            found: plan.picked.len(),
        });
    } else {
        let total = packed_weight(inst, plan);
        if total > inst.capacity {
            out.push(Violation::CapacityExceeded {
                total,
                capacity: inst.capacity,
            });
        }
    }
    out
}

pub fn profit(inst: &TtpInstance, plan: &PackingPlan) -> f64 {
    inst.items
        .iter()
        .zip(&plan.picked)
        .filter(|(_, &p)| p)
        .map(|(it, _)| it.profit)
        .sum()
}

pub fn packed_weight(inst: &TtpInstance, plan: &PackingPlan) -> f64 {
    inst.items
        .iter()
        .zip(&plan.picked)
        .filter(|(_, &p)| p)
        .map(|(it, _)| it.weight)
        .sum()
}

/// Picked weight collected at each city.
pub(crate) fn city_weights(inst: &TtpInstance, plan: &PackingPlan) -> Vec<f64> {
    let mut w = vec![0.0; inst.dimension()];
    for (item, &p) in inst.items.iter().zip(&plan.picked) {
        if p {
            w[item.city] += item.weight;
        }
    }
    w
}

fn check(inst: &TtpInstance, tour: &Tour, plan: &PackingPlan) -> Result<(), EvalError> {
    let tv = tour_violations(inst, tour);
    if !tv.is_empty() {
        return Err(EvalError::InvalidTour(tv));
    }
    if plan.picked.len() != inst.num_items() {
        return Err(EvalError::PlanLength {
            expected: inst.num_items(),
            found: plan.picked.len(),
        });
    }
    let total = packed_weight(inst, plan);
    if total > inst.capacity {
        return Err(EvalError::CapacityExceeded {
            total,
            capacity: inst.capacity,
        });
    }
    Ok(())
}

/// Travel time along `order` given per-city picked weights. Unchecked.
pub(crate) fn travel_time_raw(
    inst: &TtpInstance,
    order: &[usize],
    city_weight: &[f64],
) -> Result<f64, EvalError> {
    let n = order.len();
    add_work(n as u64);
    let nu = inst.nu();
    let mut load = 0.0;
    let mut time = 0.0;
    for i in 0..n {
        let city = order[i];
        load += city_weight[city];
        let speed = inst.max_speed - nu * load;
        if speed <= 0.0 {
            return Err(EvalError::CapacityExceeded {
                total: load,
                capacity: inst.capacity,
            });
        }
        time += inst.dist(city, order[(i + 1) % n]) / speed;
    }
    Ok(time)
}

/// Total travelling time: the term multiplied by the renting rate.
pub fn travel_time(inst: &TtpInstance, tour: &Tour, plan: &PackingPlan) -> Result<f64, EvalError> {
    check(inst, tour, plan)?;
    travel_time_raw(inst, &tour.order, &city_weights(inst, plan))
}

/// The TTP objective `Z(tour, plan)`.
pub fn objective(inst: &TtpInstance, tour: &Tour, plan: &PackingPlan) -> Result<f64, EvalError> {
    let time = travel_time(inst, tour, plan)?;
    Ok(profit(inst, plan) - inst.renting_rate * time)
}

/// A checked solution with its objective and the load carried out of each
/// tour position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub tour: Tour,
    pub plan: PackingPlan,
    pub objective: f64,
    pub weight_trace: Vec<f64>,
}

impl Solution {
    pub fn evaluate(
        inst: &TtpInstance,
        tour: Tour,
        plan: PackingPlan,
    ) -> Result<Solution, EvalError> {
        let objective = objective(inst, &tour, &plan)?;
        let cw = city_weights(inst, &plan);
        let mut load = 0.0;
        let weight_trace = tour
            .order
            .iter()
            .map(|&c| {
                load += cw[c];
                load
            })
            .collect();
        Ok(Solution {
            tour,
            plan,
            objective,
            weight_trace,
        })
    }

    /// Wraps a solution whose objective was computed incrementally.
    pub(crate) fn from_parts(
        inst: &TtpInstance,
        tour: Tour,
        plan: PackingPlan,
        objective: f64,
    ) -> Solution {
        let sol =
            Solution::evaluate(inst, tour, plan).expect("solver produced an infeasible solution");
        debug_assert!(
            (sol.objective - objective).abs() <= 1e-9 * sol.objective.abs().max(1.0),
            "cached objective {objective} drifted from {}",
            sol.objective
        );
        sol
    }

    /// Two-line text form: 1-based tour, then picked 1-based item ids.
    pub fn to_text(&self) -> String {
        let tour: Vec<String> = self
            .tour
            .order
            .iter()
            .map(|c| (c + 1).to_string())
            .collect();
        let items: Vec<String> = self
            .plan
            .picked_ids()
            .iter()
            .map(|k| k.to_string())
            .collect();
        format!("{}\n{}\n", tour.join(" "), items.join(" "))
    }

    pub fn from_text(inst: &TtpInstance, text: &str) -> Result<Solution, EvalError> {
        let mut lines = text.lines();
        let parse_ids = |line: Option<&str>| -> Result<Vec<usize>, EvalError> {
            line.unwrap_or("")
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| EvalError::Parse(format!("bad id `{t}`")))
                })
                .collect()
        };
        let tour_ids = parse_ids(lines.next())?;
        let item_ids = parse_ids(lines.next())?;
        if tour_ids.contains(&0) {
            return Err(EvalError::Parse("city ids start at 1".into()));
        }
        if let Some(&bad) = item_ids.iter().find(|&&k| k == 0 || k > inst.num_items()) {
            return Err(EvalError::Parse(format!("item id {bad} out of range")));
        }
        let plan = PackingPlan::from_ids(inst.num_items(), &item_ids);
        Solution::evaluate(inst, Tour::from_ids(&tour_ids), plan)
    }
}

/// Packing-plan evaluator for a fixed tour.
///
/// Keeps per-leg times and their running prefix sums so that a move first
/// touching tour position `j` is re-evaluated from `j` onward only. The tail
/// is summed in the same order as the from-scratch formula, so incremental and
/// full evaluation agree bit for bit.
#[derive(Debug, Clone)]
pub struct PackingEvaluator<'a> {
    inst: &'a TtpInstance,
    tour: Tour,
    position: Vec<usize>,
    leg: Vec<f64>,
    pos_weight: Vec<f64>,
    load: Vec<f64>,
    /// `prefix[i]` is the time spent on legs before position `i`.
    prefix: Vec<f64>,
    plan: PackingPlan,
    profit: f64,
    weight: f64,
    nu: f64,
}

impl<'a> PackingEvaluator<'a> {
    pub fn new(inst: &'a TtpInstance, tour: &Tour, plan: &PackingPlan) -> Result<Self, EvalError> {
        check(inst, tour, plan)?;
        let n = tour.order.len();
        add_work((n + plan.picked.len()) as u64);
        let mut position = vec![0; n];
        for (p, &c) in tour.order.iter().enumerate() {
            position[c] = p;
        }
        let leg = (0..n)
            .map(|i| inst.dist(tour.order[i], tour.order[(i + 1) % n]))
            .collect();
        let cw = city_weights(inst, plan);
        let pos_weight = tour.order.iter().map(|&c| cw[c]).collect();
        let mut ev = PackingEvaluator {
            inst,
            tour: tour.clone(),
            position,
            leg,
            pos_weight,
            load: vec![0.0; n],
            prefix: vec![0.0; n + 1],
            plan: plan.clone(),
            profit: profit(inst, plan),
            weight: packed_weight(inst, plan),
            nu: inst.nu(),
        };
        ev.refresh_from(0);
        Ok(ev)
    }

    fn refresh_from(&mut self, start: usize) {
        let n = self.leg.len();
        let mut load = if start == 0 {
            0.0
        } else {
            self.load[start - 1]
        };
        let mut time = self.prefix[start];
        for i in start..n {
            load += self.pos_weight[i];
            self.load[i] = load;
            time += self.leg[i] / (self.inst.max_speed - self.nu * load);
            self.prefix[i + 1] = time;
        }
    }

    pub fn tour(&self) -> &Tour {
        &self.tour
    }

    pub fn plan(&self) -> &PackingPlan {
        &self.plan
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn travel_time(&self) -> f64 {
        self.prefix[self.leg.len()]
    }

    pub fn objective(&self) -> f64 {
        self.profit - self.inst.renting_rate * self.travel_time()
    }

    /// Tour distance from the city holding item `k` back to the start.
    pub fn remaining_distance(&self, k: usize) -> f64 {
        let p = self.position[self.inst.items[k].city];
        add_work((self.leg.len() - p) as u64);
        self.leg[p..].iter().sum()
    }

    /// Objective after toggling each item in `flips` (distinct indices), or
    /// `None` if the result would exceed the capacity.
    pub fn try_flips(&self, flips: &[usize]) -> Option<f64> {
        if flips.is_empty() {
            return Some(self.objective());
        }
        let mut d_profit = 0.0;
        let mut d_weight = 0.0;
        let mut changes: Vec<(usize, f64)> = Vec::with_capacity(flips.len());
        for &k in flips {
            let item = &self.inst.items[k];
            let sign = if self.plan.picked[k] { -1.0 } else { 1.0 };
            d_profit += sign * item.profit;
            d_weight += sign * item.weight;
            changes.push((self.position[item.city], sign * item.weight));
        }
        if self.weight + d_weight > self.inst.capacity {
            add_work(flips.len() as u64);
            return None;
        }
        changes.sort_by_key(|c| c.0);
        let start = changes[0].0;
        let n = self.leg.len();
        add_work((n - start + flips.len()) as u64);
        let mut load = if start == 0 {
            0.0
        } else {
            self.load[start - 1]
        };
        let mut time = self.prefix[start];
        let mut next = 0;
        for i in start..n {
            let mut w = self.pos_weight[i];
            while next < changes.len() && changes[next].0 == i {
                w += changes[next].1;
                next += 1;
            }
            load += w;
            time += self.leg[i] / (self.inst.max_speed - self.nu * load);
        }
        Some(self.profit + d_profit - self.inst.renting_rate * time)
    }

    pub fn try_flip(&self, k: usize) -> Option<f64> {
        self.try_flips(&[k])
    }

    pub fn apply_flips(&mut self, flips: &[usize]) {
        let mut start = usize::MAX;
        for &k in flips {
            let item = self.inst.items[k];
            let p = self.position[item.city];
            let sign = if self.plan.picked[k] { -1.0 } else { 1.0 };
            self.plan.picked[k] = !self.plan.picked[k];
            self.profit += sign * item.profit;
            self.weight += sign * item.weight;
            self.pos_weight[p] += sign * item.weight;
            start = start.min(p);
        }
        if start != usize::MAX {
            add_work((self.leg.len() + self.plan.picked.len()) as u64);
            // recompute position weights exactly to avoid drift from +/- pairs
            let cw = city_weights(self.inst, &self.plan);
            for i in start..self.leg.len() {
                self.pos_weight[i] = cw[self.tour.order[i]];
            }
            self.profit = profit(self.inst, &self.plan);
            self.weight = packed_weight(self.inst, &self.plan);
            self.refresh_from(start);
        }
    }

    pub fn into_solution(self) -> Solution {
        let z = self.objective();
        Solution::from_parts(self.inst, self.tour, self.plan, z)
    }
}

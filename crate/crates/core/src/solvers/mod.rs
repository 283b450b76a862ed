//! Budgeted TTP heuristics and the named portfolio used for benchmarking.
//!
//! Every solver works under a [`Budget`]: wall-clock milliseconds, or one of
//! two deterministic caps that make runs bit-reproducible. An iteration cap
//! counts solver steps; a work cap counts elementary operations (see
//! [`work_counter`](crate::evaluation::work_counter)) and so behaves like a
//! machine-independent clock shared by all solvers.

pub mod local;
pub mod packing;
pub mod restart;
pub mod tour;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{work_counter, PackingPlan, Solution};
use crate::instance::TtpInstance;

pub use local::{bitflip, insertion, one_plus_one_ea, rls};
pub use packing::{pack_iterative, sh_pack};
pub use restart::s5;
pub use tour::{nearest_neighbor_tour, two_opt};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error("invalid solver spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Millis(u64),
    Iterations(u64),
    Work(u64),
    Unlimited,
}

/// Best-so-far improvement event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub elapsed_ms: f64,
    pub best: f64,
}

/// Shared stopping rule and trajectory recorder for one solver run.
#[derive(Debug, Clone)]
pub struct Progress {
    start: Instant,
    deadline: Option<Instant>,
    max_iterations: Option<u64>,
    iterations: u64,
    work_start: u64,
    max_work: Option<u64>,
    /// Work and time at which the first complete solution existed.
    first_feasible: Option<(u64, f64)>,
    best: f64,
    trajectory: Vec<TrajectoryPoint>,
}

impl Progress {
    pub fn new(budget: Budget) -> Self {
        let start = Instant::now();
        let (deadline, max_iterations, max_work) = match budget {
            Budget::Millis(ms) => (Some(start + Duration::from_millis(ms)), None, None),
            Budget::Iterations(k) => (None, Some(k), None),
            Budget::Work(w) => (None, None, Some(w)),
            Budget::Unlimited => (None, None, None),
        };
        Progress {
            start,
            deadline,
            max_iterations,
            iterations: 0,
            work_start: work_counter(),
            max_work,
            first_feasible: None,
            best: f64::NEG_INFINITY,
            trajectory: Vec::new(),
        }
    }

    /// A tracker for a nested phase: same deadline and work allowance, no
    /// iteration cap, empty trajectory.
    pub fn sub(&self) -> Progress {
        Progress {
            max_iterations: None,
            iterations: 0,
            first_feasible: None,
            best: f64::NEG_INFINITY,
            trajectory: Vec::new(),
            ..*self
        }
    }

    pub fn exhausted(&self) -> bool {
        if let Some(k) = self.max_iterations {
            if self.iterations >= k {
                return true;
            }
        }
        if let Some(w) = self.max_work {
            if self.work() >= w {
                return true;
            }
        }
        matches!(self.deadline, Some(d) if Instant::now() >= d)
    }

    /// Operations charged on this thread since the run started.
    pub fn work(&self) -> u64 {
        work_counter().wrapping_sub(self.work_start)
    }

    /// Notes that a complete solution now exists. Only the first call counts.
    pub fn mark_feasible(&mut self) {
        if self.first_feasible.is_none() {
            self.first_feasible = Some((self.work(), self.elapsed_ms()));
        }
    }

    /// Whether the first complete solution appeared within the budget, with
    /// `grace_ms` of slack on a wall-clock deadline.
    pub fn feasible_in_budget(&self, budget_ms: f64, grace_ms: f64) -> bool {
        match self.first_feasible {
            None => false,
            Some((work, ms)) => {
                self.max_work.is_none_or(|w| work <= w)
                    && (!self.is_wall_clock() || ms <= budget_ms + grace_ms)
            }
        }
    }

    /// Counts one iteration; returns `false` once the budget is spent.
    pub fn tick(&mut self) -> bool {
        if self.exhausted() {
            return false;
        }
        self.iterations += 1;
        true
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    pub fn is_wall_clock(&self) -> bool {
        self.deadline.is_some()
    }

    /// Records `z` if it improves on the best value seen so far.
    pub fn observe(&mut self, z: f64) {
        if z > self.best {
            self.best = z;
            self.trajectory.push(TrajectoryPoint {
                iteration: self.iterations,
                elapsed_ms: self.elapsed_ms(),
                best: z,
            });
        }
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub name: String,
    pub seed: u64,
    pub budget_ms: u64,
    /// Iteration cap; when set the wall clock is ignored and runs are deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<u64>,
    /// Work cap in elementary operations; deterministic like `iters`, which
    /// takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl SolverSpec {
    pub fn new(name: &str, seed: u64, budget_ms: u64) -> Self {
        SolverSpec {
            name: name.to_string(),
            seed,
            budget_ms,
            iters: None,
            work: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_iters(mut self, iters: u64) -> Self {
        self.iters = Some(iters);
        self
    }

    pub fn with_work(mut self, work: u64) -> Self {
        self.work = Some(work);
        self
    }

    pub fn budget(&self) -> Budget {
        match (self.iters, self.work) {
            (Some(k), _) => Budget::Iterations(k),
            (None, Some(w)) => Budget::Work(w),
            (None, None) => Budget::Millis(self.budget_ms),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !REGISTRY.contains(&self.name.as_str()) {
            return Err(SolverError::UnknownSolver(self.name.clone()));
        }
        if self.budget_ms == 0 {
            return Err(SolverError::InvalidSpec(
                "budget_ms must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    Timeout,
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub algorithm: String,
    pub status: RunStatus,
    pub solution: Option<Solution>,
    pub elapsed_ms: f64,
    pub iterations: u64,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl SolverResult {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }
}

/// Slack past the deadline before a finished run counts as a timeout.
const OVERRUN_GRACE_MS: f64 = 50.0;

/// Names accepted by [`run_solver`].
pub const REGISTRY: [&str; 7] = ["SH", "RLS", "EA", "BITFLIP", "PI", "S5", "INS"];

/// Work cap of [`default_roster`]: roughly a few hundred milliseconds of
/// computation, enough for many restarts on small instances and too little
/// for some constructive heuristics on the largest generated ones.
pub const DEFAULT_WORK: u64 = 10_000_000;

/// The seven-algorithm portfolio, every solver under the same work cap.
/// `budget_ms` is kept as metadata.
pub fn default_roster(seed: u64, budget_ms: u64) -> Vec<SolverSpec> {
    roster_with_work(seed, budget_ms, DEFAULT_WORK)
}

pub fn roster_with_work(seed: u64, budget_ms: u64, work: u64) -> Vec<SolverSpec> {
    REGISTRY
        .iter()
        .map(|name| SolverSpec::new(name, seed, budget_ms).with_work(work))
        .collect()
}

/// Runs one named solver. Timeouts are reported in the result, not as errors.
pub fn run_solver(spec: &SolverSpec, inst: &TtpInstance) -> Result<SolverResult, SolverError> {
    spec.validate()?;
    let mut progress = Progress::new(spec.budget());
    let solution = match spec.name.as_str() {
        "SH" => {
            let t = base_tour(inst, spec.seed, &mut progress);
            let plan = sh_pack(inst, &t);
            progress.mark_feasible();
            Some(Solution::evaluate(inst, t, plan).expect("SH plan is feasible"))
        }
        "RLS" => {
            let start = base_empty(inst, spec.seed, &mut progress);
            Some(local::rls_tracked(inst, start, spec.seed, &mut progress))
        }
        "EA" => {
            let start = base_empty(inst, spec.seed, &mut progress);
            Some(local::ea_tracked(inst, start, spec.seed, &mut progress))
        }
        "BITFLIP" => {
            let t = base_tour(inst, spec.seed, &mut progress);
            let plan = sh_pack(inst, &t);
            let start = Solution::evaluate(inst, t, plan).expect("SH plan is feasible");
            progress.mark_feasible();
            Some(local::bitflip_tracked(inst, start, &mut progress))
        }
        "PI" => {
            let t = base_tour(inst, spec.seed, &mut progress);
            let plan = pack_iterative(inst, &t);
            progress.mark_feasible();
            Some(Solution::evaluate(inst, t, plan).expect("PI plan is feasible"))
        }
        "S5" => restart::s5_tracked(inst, spec.seed, &mut progress),
        "INS" => {
            let t = base_tour(inst, spec.seed, &mut progress);
            let plan = pack_iterative(inst, &t);
            let start = Solution::evaluate(inst, t, plan).expect("PI plan is feasible");
            progress.mark_feasible();
            progress.observe(start.objective);
            let moved = local::insertion_tracked(inst, start, &mut progress);
            if progress.exhausted() {
                Some(moved)
            } else {
                let repacked = pack_iterative(inst, &moved.tour);
                let alt = Solution::evaluate(inst, moved.tour.clone(), repacked)
                    .expect("PI plan is feasible");
                Some(if alt.objective > moved.objective {
                    alt
                } else {
                    moved
                })
            }
        }
        other => return Err(SolverError::UnknownSolver(other.to_string())),
    };
    let elapsed_ms = progress.elapsed_ms();
    // anytime solvers stop at the budget; a timeout means no solution was
    // complete by then
    let grace_ms = OVERRUN_GRACE_MS + spec.budget_ms as f64 / 10.0;
    let timed_out = !progress.feasible_in_budget(spec.budget_ms as f64, grace_ms);
    let solution = match solution {
        Some(s) if !timed_out => {
            progress.observe(s.objective);
            Some(s)
        }
        _ => None,
    };
    Ok(SolverResult {
        algorithm: spec.name.clone(),
        status: if solution.is_some() {
            RunStatus::Ok
        } else {
            RunStatus::Timeout
        },
        solution,
        elapsed_ms,
        iterations: progress.iterations(),
        trajectory: progress.trajectory().to_vec(),
    })
}

/// Nearest neighbour followed by 2-opt, bounded by the run's deadline or
/// work cap but not by its iteration cap.
fn base_tour(inst: &TtpInstance, seed: u64, progress: &mut Progress) -> crate::evaluation::Tour {
    let t = nearest_neighbor_tour(inst, seed);
    tour::two_opt_tracked(inst, &t, &mut progress.sub())
}

fn base_empty(inst: &TtpInstance, seed: u64, progress: &mut Progress) -> Solution {
    let t = base_tour(inst, seed, progress);
    let s = Solution::evaluate(inst, t, PackingPlan::empty(inst.num_items()))
        .expect("empty plan is feasible");
    progress.mark_feasible();
    progress.observe(s.objective);
    s
}

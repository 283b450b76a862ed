//! Performance matrices, score scaling, cross-validation splits and
//! ASlib-style scenario export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_NAMES, GROUPS};
use crate::instance::TtpInstance;
use crate::solvers::{run_solver, RunStatus, SolverError, SolverSpec};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("row {0} has no solved cell")]
    EmptyRow(String),
    #[error("need at least {k} instances for {k} folds, got {n}")]
    TooFewInstances { n: usize, k: usize },
    #[error("inconsistent ids: {0}")]
    InconsistentIds(String),
    #[error("malformed scenario file {file}: {reason}")]
    Parse { file: String, reason: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMatrix {
    pub instances: Vec<String>,
    pub algorithms: Vec<String>,
    /// Objective per cell; `None` is Missing (timeout or crash).
    pub raw: Vec<Vec<Option<f64>>>,
    pub status: Vec<Vec<RunStatus>>,
    pub budget_ms: u64,
    /// Base seed of each algorithm.
    pub seeds: Vec<u64>,
    /// Iteration cap of each algorithm, if any.
    pub iters: Vec<Option<u64>>,
    /// Work cap of each algorithm, if any.
    #[serde(default)]
    pub work: Vec<Option<u64>>,
}

impl PerformanceMatrix {
    /// Builds a matrix from plain values; `None` cells get status Timeout.
    pub fn from_values(
        instances: Vec<String>,
        algorithms: Vec<String>,
        raw: Vec<Vec<Option<f64>>>,
    ) -> Self {
        let status = raw
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| {
                        if c.is_some() {
                            RunStatus::Ok
                        } else {
                            RunStatus::Timeout
                        }
                    })
                    .collect()
            })
            .collect();
        let a = algorithms.len();
        PerformanceMatrix {
            instances,
            algorithms,
            raw,
            status,
            budget_ms: 0,
            seeds: vec![0; a],
            iters: vec![None; a],
            work: vec![None; a],
        }
    }

    pub fn algorithm_index(&self, name: &str) -> Option<usize> {
        self.algorithms.iter().position(|a| a == name)
    }

    pub fn to_csv(&self) -> String {
        cells_csv(&self.instances, &self.algorithms, |i, a| {
            match self.raw[i][a] {
                Some(z) => z.to_string(),
                None => "NA".into(),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatrix {
    pub instances: Vec<String>,
    pub algorithms: Vec<String>,
    /// Values in [0, 1], or -1 for Missing.
    pub scaled: Vec<Vec<f64>>,
}

impl ScaledMatrix {
    /// Per-instance maximum over the portfolio.
    pub fn oracle(&self) -> Vec<f64> {
        self.scaled
            .iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.scaled.len() as f64;
        (0..self.algorithms.len())
            .map(|a| self.scaled.iter().map(|r| r[a]).sum::<f64>() / n)
            .collect()
    }

    /// Index of the algorithm with the highest mean; ties to the lowest index.
    pub fn single_best(&self) -> usize {
        let means = self.column_means();
        let mut best = 0;
        for (a, &m) in means.iter().enumerate() {
            if m > means[best] {
                best = a;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        cells_csv(&self.instances, &self.algorithms, |i, a| {
            self.scaled[i][a].to_string()
        })
    }
}

fn cells_csv(rows: &[String], cols: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::from("instance_id");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(r);
        for a in 0..cols.len() {
            out.push(',');
            out.push_str(&cell(i, a));
        }
        out.push('\n');
    }
    out
}

/// Maps each row linearly so its best cell becomes 1 and its worst 0;
/// Missing cells become -1 and a row of equal values becomes all 1.
pub fn scale_scores(raw: &PerformanceMatrix) -> Result<ScaledMatrix, BenchmarkError> {
    let mut scaled = Vec::with_capacity(raw.raw.len());
    for (i, row) in raw.raw.iter().enumerate() {
        let present = row.iter().flatten().copied();
        let best = present.clone().fold(f64::NEG_INFINITY, f64::max);
        let worst = present.fold(f64::INFINITY, f64::min);
        if best == f64::NEG_INFINITY {
            return Err(BenchmarkError::EmptyRow(raw.instances[i].clone()));
        }
        scaled.push(
            row.iter()
                .map(|c| match c {
                    None => -1.0,
                    Some(_) if best == worst => 1.0,
                    Some(z) => (z - worst) / (best - worst),
                })
                .collect(),
        );
    }
    Ok(ScaledMatrix {
        instances: raw.instances.clone(),
        algorithms: raw.algorithms.clone(),
        scaled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSplits {
    pub instances: Vec<String>,
    /// Fold of each instance, 1-based.
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl CvSplits {
    pub fn fold_of(&self, instance: &str) -> Option<usize> {
        self.instances
            .iter()
            .position(|i| i == instance)
            .map(|p| self.folds[p])
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f - 1] += 1;
        }
        sizes
    }
}

/// Random partition into `k` folds whose sizes differ by at most one.
pub fn make_cv_splits(ids: &[String], k: usize, seed: u64) -> Result<CvSplits, BenchmarkError> {
    if k == 0 || ids.len() < k {
        return Err(BenchmarkError::TooFewInstances { n: ids.len(), k });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k + 1;
    }
    Ok(CvSplits {
        instances: ids.to_vec(),
        folds,
        k,
        seed,
    })
}

/// Stable 64-bit digest of a string.
pub fn stable_hash(s: &str) -> u64 {
    let d = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed of one cell: the algorithm's seed mixed with the instance id.
pub fn cell_seed(spec: &SolverSpec, instance: &str) -> u64 {
    spec.seed ^ stable_hash(instance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JournalEntry {
    instance: String,
    algorithm: String,
    seed: u64,
    iters: Option<u64>,
    #[serde(default)]
    work: Option<u64>,
    budget_ms: u64,
    status: RunStatus,
    objective: Option<f64>,
    elapsed_ms: f64,
    iterations: u64,
}

impl JournalEntry {
    fn matches(&self, spec: &SolverSpec, seed: u64) -> bool {
        self.seed == seed
            && self.iters == spec.iters
            && self.work == spec.work
            && self.budget_ms == spec.budget_ms
    }
}

fn read_journal(path: &Path) -> Result<Vec<JournalEntry>, BenchmarkError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        // a torn last line from an interrupted run is skipped
        if let Ok(e) = serde_json::from_str::<JournalEntry>(&line?) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Runs every (instance, solver) cell on `workers` threads. With a journal,
/// finished cells are appended as JSON lines and reused by later calls.
pub fn run_matrix(
    instances: &[TtpInstance],
    roster: &[SolverSpec],
    workers: usize,
    journal: Option<&Path>,
) -> Result<PerformanceMatrix, BenchmarkError> {
    for spec in roster {
        spec.validate()?;
    }
    let ids: Vec<String> = instances.iter().map(|i| i.name.clone()).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(BenchmarkError::InconsistentIds(format!(
                "duplicate instance id `{id}`"
            )));
        }
    }

    let mut done: HashMap<(String, String), JournalEntry> = HashMap::new();
    if let Some(p) = journal {
        for e in read_journal(p)? {
            done.insert((e.instance.clone(), e.algorithm.clone()), e);
        }
    }
    let writer = match journal {
        Some(p) => {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir)?;
            }
            Some(Mutex::new(
                OpenOptions::new().create(true).append(true).open(p)?,
            ))
        }
        None => None,
    };

    let mut cells: Vec<(usize, usize)> = Vec::new();
    for i in 0..instances.len() {
        for a in 0..roster.len() {
            cells.push((i, a));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<JournalEntry, BenchmarkError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, a)| {
                let spec = &roster[a];
                let seed = cell_seed(spec, &ids[i]);
                if let Some(e) = done.get(&(ids[i].clone(), spec.name.clone())) {
                    if e.matches(spec, seed) {
                        return Ok(e.clone());
                    }
                }
                let entry = run_cell(&instances[i], spec, seed);
                if let Some(w) = &writer {
                    let mut f = w.lock().expect("journal lock");
                    writeln!(
                        f,
                        "{}",
                        serde_json::to_string(&entry).expect("serializable")
                    )?;
                    f.flush()?;
                }
                Ok(entry)
            })
            .collect()
    });

    let a = roster.len();
    let mut raw = vec![vec![None; a]; instances.len()];
    let mut status = vec![vec![RunStatus::Ok; a]; instances.len()];
    for (&(i, j), r) in cells.iter().zip(results) {
        let e = r?;
        raw[i][j] = e.objective;
        status[i][j] = e.status;
    }
    Ok(PerformanceMatrix {
        instances: ids,
        algorithms: roster.iter().map(|s| s.name.clone()).collect(),
        raw,
        status,
        budget_ms: roster.iter().map(|s| s.budget_ms).max().unwrap_or(0),
        seeds: roster.iter().map(|s| s.seed).collect(),
        iters: roster.iter().map(|s| s.iters).collect(),
        work: roster.iter().map(|s| s.work).collect(),
    })
}

fn run_cell(inst: &TtpInstance, spec: &SolverSpec, seed: u64) -> JournalEntry {
    let mut cell_spec = spec.clone();
    cell_spec.seed = seed;
    let outcome = catch_unwind(AssertUnwindSafe(|| run_solver(&cell_spec, inst)));
    let (status, objective, elapsed_ms, iterations) = match outcome {
        Ok(Ok(r)) => (r.status, r.objective(), r.elapsed_ms, r.iterations),
        _ => (RunStatus::Crash, None, 0.0, 0),
    };
    JournalEntry {
        instance: inst.name.clone(),
        algorithm: spec.name.clone(),
        seed,
        iters: spec.iters,
        work: spec.work,
        budget_ms: spec.budget_ms,
        status,
        objective,
        // deterministic runs keep no timing so that journals are reproducible
        elapsed_ms: if spec.iters.is_some() || spec.work.is_some() {
            0.0
        } else {
            elapsed_ms
        },
        iterations,
    }
}

/// Everything an algorithm-selection experiment needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub matrix: PerformanceMatrix,
    pub scaled: ScaledMatrix,
    /// Aligned with `matrix.instances`.
    pub features: Vec<FeatureVector>,
    pub splits: CvSplits,
    /// Unit of the feature-cost table: "ms" or "work_units".
    pub cost_unit: String,
}

impl Scenario {
    pub fn new(
        name: &str,
        matrix: PerformanceMatrix,
        features: Vec<FeatureVector>,
        splits: CvSplits,
        cost_unit: &str,
    ) -> Result<Self, BenchmarkError> {
        let scaled = scale_scores(&matrix)?;
        let s = Scenario {
            name: name.into(),
            matrix,
            scaled,
            features,
            splits,
            cost_unit: cost_unit.into(),
        };
        s.check_ids()?;
        Ok(s)
    }

    fn check_ids(&self) -> Result<(), BenchmarkError> {
        let n = self.matrix.instances.len();
        if self.features.len() != n {
            return Err(BenchmarkError::InconsistentIds(format!(
                "{} feature rows for {n} instances",
                self.features.len()
            )));
        }
        if self.splits.instances != self.matrix.instances {
            return Err(BenchmarkError::InconsistentIds(
                "CV splits list different instances".into(),
            ));
        }
        if self.scaled.instances != self.matrix.instances
            || self.scaled.algorithms != self.matrix.algorithms
        {
            return Err(BenchmarkError::InconsistentIds(
                "scaled matrix does not match raw matrix".into(),
            ));
        }
        Ok(())
    }
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Ok => "ok",
        RunStatus::Timeout => "timeout",
        RunStatus::Crash => "crash",
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "?".into()
    }
}

fn list(items: &[&str]) -> String {
    format!("[{}]", items.join(", "))
}

/// Writes the scenario directory: description, ARFF tables and CSV mirrors.
/// Output depends only on the scenario contents.
pub fn export_scenario(s: &Scenario, dir: &Path) -> Result<(), BenchmarkError> {
    s.check_ids()?;
    fs::create_dir_all(dir)?;
    let m = &s.matrix;
    let algs: Vec<&str> = m.algorithms.iter().map(String::as_str).collect();

    let mut d = String::new();
    writeln!(d, "scenario_id: {}", s.name).unwrap();
    writeln!(d, "performance_measures: [solution_quality]").unwrap();
    writeln!(d, "maximize: [true]").unwrap();
    writeln!(d, "performance_type: [solution_quality]").unwrap();
    writeln!(
        d,
        "algorithm_cutoff_time: {}",
        fmt_num(m.budget_ms as f64 / 1000.0)
    )
    .unwrap();
    writeln!(d, "algorithm_cutoff_memory: ?").unwrap();
    writeln!(d, "features_cutoff_time: ?").unwrap();
    writeln!(d, "features_cutoff_memory: ?").unwrap();
    writeln!(d, "algorithms_deterministic: {}", list(&algs)).unwrap();
    writeln!(d, "algorithms_stochastic: []").unwrap();
    writeln!(d, "features_deterministic: {}", list(&FEATURE_NAMES)).unwrap();
    writeln!(d, "features_stochastic: []").unwrap();
    writeln!(d, "number_of_feature_steps: {}", GROUPS.len()).unwrap();
    writeln!(d, "default_steps: {}", list(&GROUPS)).unwrap();
    writeln!(d, "feature_steps:").unwrap();
    for g in GROUPS {
        writeln!(d, "  {g}:").unwrap();
        writeln!(d, "    provides: {}", list(&features_of_group(g))).unwrap();
    }
    writeln!(d, "metainfo:").unwrap();
    writeln!(d, "  budget_ms: {}", m.budget_ms).unwrap();
    let seeds: Vec<String> = m.seeds.iter().map(u64::to_string).collect();
    writeln!(d, "  seeds: [{}]", seeds.join(", ")).unwrap();
    let iters: Vec<String> = m
        .iters
        .iter()
        .map(|i| i.map_or("none".into(), |k| k.to_string()))
        .collect();
    writeln!(d, "  iteration_caps: [{}]", iters.join(", ")).unwrap();
    let work: Vec<String> = m
        .work
        .iter()
        .map(|i| i.map_or("none".into(), |k| k.to_string()))
        .collect();
    writeln!(d, "  work_caps: [{}]", work.join(", ")).unwrap();
    writeln!(d, "  feature_cost_unit: {}", s.cost_unit).unwrap();
    writeln!(d, "  cv_seed: {}", s.splits.seed).unwrap();
    writeln!(d, "  cv_folds: {}", s.splits.k).unwrap();
    writeln!(d, "  mst_root_city: 1").unwrap();
    fs::write(dir.join("description.txt"), d)?;

    let mut runs = arff_header(
        "ALGORITHM_RUNS",
        &[
            ("instance_id", "STRING"),
            ("repetition", "NUMERIC"),
            ("algorithm", "STRING"),
            ("solution_quality", "NUMERIC"),
            (
                "runstatus",
                "{ok, timeout, memout, not_applicable, crash, other}",
            ),
        ],
    );
    for (i, id) in m.instances.iter().enumerate() {
        for (a, alg) in m.algorithms.iter().enumerate() {
            let q = m.raw[i][a].map_or("?".into(), |z| z.to_string());
            writeln!(runs, "{id},1,{alg},{q},{}", status_name(m.status[i][a])).unwrap();
        }
    }
    fs::write(dir.join("algorithm_runs.arff"), runs)?;

    let mut attrs = vec![("instance_id", "STRING"), ("repetition", "NUMERIC")];
    attrs.extend(FEATURE_NAMES.iter().map(|f| (*f, "NUMERIC")));
    let mut fv = arff_header("FEATURE_VALUES", &attrs);
    for (id, f) in m.instances.iter().zip(&s.features) {
        let vals: Vec<String> = f.values.iter().map(|&v| fmt_num(v)).collect();
        writeln!(fv, "{id},1,{}", vals.join(",")).unwrap();
    }
    fs::write(dir.join("feature_values.arff"), fv)?;

    let mut attrs = vec![("instance_id", "STRING"), ("repetition", "NUMERIC")];
    attrs.extend(GROUPS.iter().map(|g| (*g, "NUMERIC")));
    let mut fc = arff_header("FEATURE_COSTS", &attrs);
    let mut cost_csv = format!("instance_id,{}\n", GROUPS.join(","));
    for (id, f) in m.instances.iter().zip(&s.features) {
        let vals: Vec<String> = GROUPS
            .iter()
            .map(|g| f.extraction_ms.get(*g).map_or("?".into(), |&v| fmt_num(v)))
            .collect();
        writeln!(fc, "{id},1,{}", vals.join(",")).unwrap();
        writeln!(cost_csv, "{id},{}", vals.join(",").replace('?', "NA")).unwrap();
    }
    fs::write(dir.join("feature_costs.arff"), fc)?;

    let mut attrs = vec![("instance_id", "STRING"), ("repetition", "NUMERIC")];
    let status_dom = "{ok, timeout, memout, presolved, crash, other, unknown}";
    attrs.extend(GROUPS.iter().map(|g| (*g, status_dom)));
    let mut rs = arff_header("FEATURE_RUNSTATUS", &attrs);
    for id in &m.instances {
        writeln!(rs, "{id},1,{}", vec!["ok"; GROUPS.len()].join(",")).unwrap();
    }
    fs::write(dir.join("feature_runstatus.arff"), rs)?;

    let mut cv = arff_header(
        "CV",
        &[
            ("instance_id", "STRING"),
            ("repetition", "NUMERIC"),
            ("fold", "NUMERIC"),
        ],
    );
    let mut cv_csv = String::from("instance_id,fold\n");
    for (id, f) in s.splits.instances.iter().zip(&s.splits.folds) {
        writeln!(cv, "{id},1,{f}").unwrap();
        writeln!(cv_csv, "{id},{f}").unwrap();
    }
    fs::write(dir.join("cv.arff"), cv)?;

    let mut feat_csv = format!("instance_id,{}\n", FeatureVector::csv_header());
    for (id, f) in m.instances.iter().zip(&s.features) {
        let vals: Vec<String> = f
            .values
            .iter()
            .map(|&v| {
                if v.is_finite() {
                    v.to_string()
                } else {
                    "NA".into()
                }
            })
            .collect();
        writeln!(feat_csv, "{id},{}", vals.join(",")).unwrap();
    }
    fs::write(dir.join("performance.csv"), m.to_csv())?;
    fs::write(dir.join("performance_scaled.csv"), s.scaled.to_csv())?;
    fs::write(dir.join("features.csv"), feat_csv)?;
    fs::write(dir.join("feature_costs.csv"), cost_csv)?;
    fs::write(dir.join("cv.csv"), cv_csv)?;
    Ok(())
}

fn features_of_group(group: &str) -> Vec<&'static str> {
    let range = match group {
        "distance" => 0..7,
        "mode" => 7..12,
        "cluster" => 12..18,
        "nnd" => 18..24,
        "centroid" => 24..29,
        "mst" => 29..40,
        "angle" => 40..45,
        "hull" => 45..47,
        _ => 47..55,
    };
    FEATURE_NAMES[range].to_vec()
}

fn arff_header(relation: &str, attrs: &[(&str, &str)]) -> String {
    let mut s = format!("@RELATION {relation}\n\n");
    for (name, ty) in attrs {
        writeln!(s, "@ATTRIBUTE {name} {ty}").unwrap();
    }
    s.push_str("\n@DATA\n");
    s
}

/// Attribute names and data rows of an ARFF file.
fn read_arff(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), BenchmarkError> {
    let text = fs::read_to_string(path)?;
    let mut attrs = Vec::new();
    let mut rows = Vec::new();
    let mut in_data = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("@ATTRIBUTE") {
            let name = line.split_whitespace().nth(1).unwrap_or_default();
            attrs.push(name.to_string());
        } else if upper.starts_with("@DATA") {
            in_data = true;
        } else if in_data {
            rows.push(line.split(',').map(|c| c.trim().to_string()).collect());
        }
    }
    Ok((attrs, rows))
}

fn parse_err(file: &str, reason: impl Into<String>) -> BenchmarkError {
    BenchmarkError::Parse {
        file: file.into(),
        reason: reason.into(),
    }
}

fn parse_num(file: &str, cell: &str) -> Result<f64, BenchmarkError> {
    if cell == "?" {
        return Ok(f64::NAN);
    }
    cell.parse()
        .map_err(|_| parse_err(file, format!("bad number `{cell}`")))
}

fn meta_value<'a>(desc: &'a str, key: &str) -> Option<&'a str> {
    desc.lines().find_map(|l| {
        l.trim()
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .map(str::trim)
    })
}

fn meta_list(v: &str) -> Vec<String> {
    v.trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Reads a directory written by [`export_scenario`].
pub fn import_scenario(dir: &Path) -> Result<Scenario, BenchmarkError> {
    let desc = fs::read_to_string(dir.join("description.txt"))?;
    let name = meta_value(&desc, "scenario_id")
        .unwrap_or("scenario")
        .to_string();
    let algorithms = meta_list(meta_value(&desc, "algorithms_deterministic").unwrap_or("[]"));
    let budget_ms = meta_value(&desc, "budget_ms")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let seeds: Vec<u64> = meta_list(meta_value(&desc, "seeds").unwrap_or("[]"))
        .iter()
        .filter_map(|s| s.parse().ok())
        .collect();
    let iters: Vec<Option<u64>> = meta_list(meta_value(&desc, "iteration_caps").unwrap_or("[]"))
        .iter()
        .map(|s| s.parse().ok())
        .collect();
    let mut work: Vec<Option<u64>> = meta_list(meta_value(&desc, "work_caps").unwrap_or("[]"))
        .iter()
        .map(|s| s.parse().ok())
        .collect();
    work.resize(algorithms.len(), None);
    let cost_unit = meta_value(&desc, "feature_cost_unit")
        .unwrap_or("ms")
        .to_string();
    let cv_seed = meta_value(&desc, "cv_seed")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);

    let file = "algorithm_runs.arff";
    let (_, rows) = read_arff(&dir.join(file))?;
    let mut instances: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: BTreeMap<(usize, usize), (Option<f64>, RunStatus)> = BTreeMap::new();
    for r in &rows {
        if r.len() < 5 {
            return Err(parse_err(file, "short row"));
        }
        let i = *index.entry(r[0].clone()).or_insert_with(|| {
            instances.push(r[0].clone());
            instances.len() - 1
        });
        let a = algorithms
            .iter()
            .position(|x| *x == r[2])
            .ok_or_else(|| parse_err(file, format!("unknown algorithm `{}`", r[2])))?;
        let q = parse_num(file, &r[3])?;
        let status = match r[4].as_str() {
            "ok" => RunStatus::Ok,
            "timeout" => RunStatus::Timeout,
            _ => RunStatus::Crash,
        };
        cells.insert((i, a), (if q.is_nan() { None } else { Some(q) }, status));
    }
    let mut raw = vec![vec![None; algorithms.len()]; instances.len()];
    let mut status = vec![vec![RunStatus::Timeout; algorithms.len()]; instances.len()];
    for ((i, a), (q, st)) in cells {
        raw[i][a] = q;
        status[i][a] = st;
    }
    let matrix = PerformanceMatrix {
        instances: instances.clone(),
        algorithms,
        raw,
        status,
        budget_ms,
        seeds,
        iters,
        work,
    };

    let file = "feature_values.arff";
    let (attrs, rows) = read_arff(&dir.join(file))?;
    if attrs.len() != FEATURE_NAMES.len() + 2
        || attrs[2..].iter().zip(FEATURE_NAMES).any(|(a, b)| a != b)
    {
        return Err(parse_err(file, "feature columns differ from the catalogue"));
    }
    let (_, cost_rows) = read_arff(&dir.join("feature_costs.arff"))?;
    let costs: HashMap<&str, &Vec<String>> = cost_rows.iter().map(|r| (r[0].as_str(), r)).collect();
    let mut by_id: HashMap<String, FeatureVector> = HashMap::new();
    for r in &rows {
        let values = r[2..]
            .iter()
            .map(|c| parse_num(file, c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut extraction_ms = BTreeMap::new();
        if let Some(c) = costs.get(r[0].as_str()) {
            for (g, v) in GROUPS.iter().zip(&c[2..]) {
                let x = parse_num("feature_costs.arff", v)?;
                if !x.is_nan() {
                    extraction_ms.insert(g.to_string(), x);
                }
            }
        }
        by_id.insert(
            r[0].clone(),
            FeatureVector {
                values,
                extraction_ms,
                approximate: false,
            },
        );
    }
    let features = instances
        .iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or_else(|| BenchmarkError::InconsistentIds(format!("no features for `{id}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let file = "cv.arff";
    let (_, rows) = read_arff(&dir.join(file))?;
    let folds_by: HashMap<&str, usize> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[2].parse().unwrap_or(0)))
        .collect();
    let folds = instances
        .iter()
        .map(|id| {
            folds_by
                .get(id.as_str())
                .copied()
                .ok_or_else(|| BenchmarkError::InconsistentIds(format!("no fold for `{id}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = folds.iter().copied().max().unwrap_or(0);
    let splits = CvSplits {
        instances,
        folds,
        k,
        seed: cv_seed,
    };
    Scenario::new(&name, matrix, features, splits, &cost_unit)
}

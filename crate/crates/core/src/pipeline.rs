//! Declarative experiments: generate or load instances, benchmark the
//! roster, extract features, export the scenario, cross-validate selectors
//! and analyse the portfolio, all under one output directory named by the
//! hash of the configuration.
//!
//! Re-running a configuration reuses the benchmark journal, so an unchanged
//! configuration reproduces its outputs byte for byte as long as every
//! solver runs under a deterministic cap.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{analyze, AnalysisError, ShapleyMethod};
use crate::benchmark::{
    export_scenario, make_cv_splits, run_matrix, BenchmarkError, ScaledMatrix, Scenario,
};
use crate::features::{estimated_work, extract_features, FeatureError, FeatureVector, TOP5_HEADER};
use crate::instance::{
    generate_instance, parse_instance, write_instance, GeneratorParams, InstanceError, KpType,
    TtpInstance,
};
use crate::selection::{
    evaluate_selector, gini_importance, select_with_subset, train_selector, Dataset, Family,
    SelectionError, SelectorConfig, SelectorReport,
};
use crate::solvers::{default_roster, SolverSpec};

pub const TOOL_VERSION: &str = concat!("ttp-folio ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Instance(_) => "instance",
            PipelineError::Benchmark(_) => "benchmark",
            PipelineError::Feature(_) => "feature",
            PipelineError::Selection(_) => "selection",
            PipelineError::Analysis(_) => "analysis",
            PipelineError::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A grid of generated instances. Instance `s` takes its size, item factor
/// and knapsack type by cycling through the lists (sizes fastest) and a
/// capacity class drawn from `capacity_classes`; its generator seed is
/// `seed + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorPlan {
    pub count: usize,
    pub sizes: Vec<usize>,
    pub item_factors: Vec<usize>,
    pub kp_types: Vec<KpType>,
    pub capacity_classes: Vec<u32>,
    pub seed: u64,
}

impl GeneratorPlan {
    /// The grid used for desk-scale selection experiments.
    pub fn desk_scale(count: usize, seed: u64) -> Self {
        GeneratorPlan {
            count,
            sizes: vec![20, 30, 50, 75, 100],
            item_factors: GeneratorParams::ITEM_FACTORS.to_vec(),
            kp_types: KpType::ALL.to_vec(),
            capacity_classes: (1..=10).collect(),
            seed,
        }
    }

    pub fn params(&self) -> Result<Vec<GeneratorParams>, PipelineError> {
        if self.sizes.is_empty()
            || self.item_factors.is_empty()
            || self.kp_types.is_empty()
            || self.capacity_classes.is_empty()
        {
            return Err(PipelineError::Config(
                "generator lists must be non-empty".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (ls, lf, lk) = (
            self.sizes.len(),
            self.item_factors.len(),
            self.kp_types.len(),
        );
        (0..self.count)
            .map(|s| {
                let c = self.capacity_classes[rng.random_range(0..self.capacity_classes.len())];
                let p = GeneratorParams::new(
                    self.sizes[s % ls],
                    self.item_factors[(s / ls) % lf],
                    self.kp_types[(s / (ls * lf)) % lk],
                    c,
                    self.seed.wrapping_add(s as u64),
                );
                p.validate()?;
                Ok(p)
            })
            .collect()
    }

    pub fn instances(&self) -> Result<Vec<TtpInstance>, PipelineError> {
        let params = self.params()?;
        Ok(params
            .par_iter()
            .map(generate_instance)
            .collect::<Result<Vec<_>, _>>()?)
    }
}

fn default_folds() -> usize {
    10
}

fn default_workers() -> usize {
    1
}

fn default_shapley() -> ShapleyMethod {
    ShapleyMethod::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Directory of `.ttp` files; exclusive with `generate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorPlan>,
    /// Parent of the per-configuration artifact directory.
    pub output_dir: PathBuf,
    pub roster: Vec<SolverSpec>,
    /// Seed for selector training.
    pub seed: u64,
    pub cv_seed: u64,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    pub families: Vec<Family>,
    /// Restricts selectors to these features; all features when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_subset: Option<Vec<String>>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_shapley")]
    pub shapley: ShapleyMethod,
    #[serde(default)]
    pub selector: SelectorConfig,
}

impl ExperimentConfig {
    /// A small end-to-end experiment: 30 generated instances and the default
    /// roster.
    pub fn demo(output_dir: &Path, seed: u64) -> Self {
        let mut generate = GeneratorPlan::desk_scale(30, seed);
        generate.sizes = vec![12, 20, 30];
        ExperimentConfig {
            name: "demo".into(),
            instance_dir: None,
            generate: Some(generate),
            output_dir: output_dir.to_path_buf(),
            roster: default_roster(seed, 500),
            seed,
            cv_seed: seed,
            cv_folds: 10,
            families: Family::ALL.to_vec(),
            feature_subset: None,
            workers: 2,
            shapley: ShapleyMethod::Exact,
            selector: SelectorConfig {
                knn_k: 8,
                ..SelectorConfig::with_seed(seed)
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.output_dir
            .join(format!("{}-{}", self.name, self.hash()))
    }

    /// Whether every solver runs under an iteration or work cap.
    pub fn deterministic(&self) -> bool {
        self.roster
            .iter()
            .all(|s| s.iters.is_some() || s.work.is_some())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("bad experiment name `{}`", self.name));
        }
        match (&self.instance_dir, &self.generate) {
            (Some(_), Some(_)) => return bad("set only one of instance_dir and generate".into()),
            (None, None) => return bad("set instance_dir or generate".into()),
            (Some(d), None) if !d.is_dir() => {
                return bad(format!("instance_dir {} does not exist", d.display()))
            }
            _ => {}
        }
        if self.roster.is_empty() {
            return bad("empty roster".into());
        }
        for s in &self.roster {
            s.validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        if let Some(names) = &self.feature_subset {
            for n in names {
                if crate::features::feature_index(n).is_none() {
                    return bad(format!("unknown feature `{n}`"));
                }
            }
        }
        Ok(())
    }
}

/// Wraps a JSON payload with the tool version and config hash.
pub fn stamped(config_hash: &str, payload: Value) -> Value {
    json!({
        "tool_version": TOOL_VERSION,
        "config_hash": config_hash,
        "data": payload,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json(path: &Path, v: &Value) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    write_file(path, &s)
}

/// Parses every `.ttp` file of a directory in file-name order.
pub fn load_instances(dir: &Path) -> Result<Vec<TtpInstance>, PipelineError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ttp"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            Ok(parse_instance(&text)?)
        })
        .collect()
}

/// Features for every instance. With `deterministic_costs` the cost table
/// holds [`estimated_work`] instead of measured milliseconds.
pub fn compute_features(
    instances: &[TtpInstance],
    deterministic_costs: bool,
) -> Result<Vec<FeatureVector>, PipelineError> {
    instances
        .par_iter()
        .map(|inst| {
            let mut fv = extract_features(inst)?;
            if deterministic_costs {
                fv.extraction_ms = estimated_work(inst);
            }
            Ok(fv)
        })
        .collect()
}

/// Per-algorithm distribution of scaled scores.
pub fn performance_overview(scaled: &ScaledMatrix) -> String {
    let mut out = String::from("algorithm,mean,median,p25,p75,min,max,failures\n");
    let means = scaled.column_means();
    for (j, a) in scaled.algorithms.iter().enumerate() {
        let mut col: Vec<f64> = scaled.scaled.iter().map(|r| r[j]).collect();
        let failures = col.iter().filter(|&&v| v < 0.0).count();
        col.sort_by(f64::total_cmp);
        let q = |p: f64| crate::selection::percentile(&col, p);
        writeln!(
            out,
            "{a},{},{},{},{},{},{},{failures}",
            means[j],
            q(0.5),
            q(0.25),
            q(0.75),
            col.first().copied().unwrap_or(0.0),
            col.last().copied().unwrap_or(0.0),
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub families: Vec<Family>,
    pub feature_subset: Option<Vec<String>>,
    pub selector: SelectorConfig,
    pub shapley: ShapleyMethod,
}

/// What [`write_report`] found, for summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub selectors: Vec<SelectorReport>,
    /// Pairwise-RF run on the five header features, when that family ran.
    pub top5_header: Option<SelectorReport>,
}

/// Emits the tables behind the performance overview, the correlation
/// heatmap, feature importances, portfolio contributions and the selector
/// comparison into `dir`.
pub fn write_report(
    scenario: &Scenario,
    opts: &ReportOptions,
    config_hash: &str,
    dir: &Path,
) -> Result<ReportSummary, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(
        &dir.join("performance_overview.csv"),
        &performance_overview(&scenario.scaled),
    )?;
    let analysis = analyze(&scenario.scaled, opts.shapley)?;
    analysis
        .write(&dir.join("analysis"))
        .map_err(io_err(&dir.join("analysis")))?;

    let full = Dataset::from_scenario(scenario);
    let data = match &opts.feature_subset {
        Some(names) => {
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            full.with_features(&refs)?
        }
        None => full.clone(),
    };
    let mut selectors = Vec::new();
    let mut top5 = None;
    let mut table =
        String::from("family,features,mean,single_best,single_best_algorithm,oracle,gap_closed\n");
    for &family in &opts.families {
        let report = evaluate_selector(family, &data, &opts.selector)?;
        let model = train_selector(family, &data, None, &opts.selector)?;
        write_file(
            &dir.join("models").join(format!("{}.json", family.name())),
            &model.to_json(),
        )?;
        if family == Family::PairwiseRF {
            let imp = gini_importance(&model)?;
            let mut csv = String::from("feature,mean,p25,p75\n");
            for k in imp.ranking() {
                writeln!(
                    csv,
                    "{},{},{},{}",
                    imp.features[k], imp.mean[k], imp.p25[k], imp.p75[k]
                )
                .unwrap();
            }
            write_file(&dir.join("importance.csv"), &csv)?;
            let sub = select_with_subset(&full, &TOP5_HEADER, family, &opts.selector)?;
            write_json(
                &dir.join("selection").join("pairwise_rf_top5_header.json"),
                &stamped(config_hash, serde_json::to_value(&sub).unwrap()),
            )?;
            top5 = Some(sub);
        }
        write_json(
            &dir.join("selection")
                .join(format!("{}.json", family.name())),
            &stamped(config_hash, serde_json::to_value(&report).unwrap()),
        )?;
        selectors.push(report);
    }
    let label = if opts.feature_subset.is_some() {
        "subset"
    } else {
        "all"
    };
    let rows = selectors
        .iter()
        .map(|r| (label, r))
        .chain(top5.iter().map(|r| ("top5_header", r)));
    for (label, r) in rows {
        writeln!(
            table,
            "{},{label},{},{},{},{},{}",
            r.family, r.mean, r.single_best, r.single_best_algorithm, r.oracle, r.gap_closed
        )
        .unwrap();
    }
    write_file(&dir.join("selectors.csv"), &table)?;
    Ok(ReportSummary {
        selectors,
        top5_header: top5,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub dir: PathBuf,
    pub config_hash: String,
    pub instances: usize,
    pub algorithms: Vec<String>,
    /// Gap closed per family.
    pub gap_closed: BTreeMap<String, f64>,
    pub top5_header_gap_closed: Option<f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("inside root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Runs the whole experiment and returns where everything went.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineSummary, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let dir = cfg.artifact_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join("config.json"), &cfg.to_json())?;

    let instances = match (&cfg.generate, &cfg.instance_dir) {
        (Some(plan), _) => {
            let insts = plan.instances()?;
            let idir = dir.join("instances");
            for inst in &insts {
                write_file(
                    &idir.join(format!("{}.ttp", inst.name)),
                    &write_instance(inst),
                )?;
            }
            insts
        }
        (None, Some(d)) => load_instances(d)?,
        (None, None) => unreachable!("validated"),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let deterministic = cfg.deterministic();
    let (matrix, features) = pool.install(|| {
        let m = run_matrix(
            &instances,
            &cfg.roster,
            cfg.workers,
            Some(&dir.join("journal.jsonl")),
        );
        (m, compute_features(&instances, deterministic))
    });
    let (matrix, features) = (matrix?, features?);
    let splits = make_cv_splits(&matrix.instances, cfg.cv_folds, cfg.cv_seed)?;
    let unit = if deterministic { "work_units" } else { "ms" };
    let scenario = Scenario::new(&cfg.name, matrix, features, splits, unit)?;
    export_scenario(&scenario, &dir.join("scenario"))?;

    let opts = ReportOptions {
        families: cfg.families.clone(),
        feature_subset: cfg.feature_subset.clone(),
        selector: SelectorConfig {
            seed: cfg.seed,
            ..cfg.selector
        },
        shapley: cfg.shapley,
    };
    let report = pool.install(|| write_report(&scenario, &opts, &hash, &dir.join("report")))?;

    let summary = PipelineSummary {
        dir: dir.clone(),
        config_hash: hash.clone(),
        instances: scenario.matrix.instances.len(),
        algorithms: scenario.matrix.algorithms.clone(),
        gap_closed: report
            .selectors
            .iter()
            .map(|r| (r.family.clone(), r.gap_closed))
            .collect(),
        top5_header_gap_closed: report.top5_header.as_ref().map(|r| r.gap_closed),
    };
    let mut summary_json = serde_json::to_value(&summary).unwrap();
    // absolute paths differ between machines
    summary_json["dir"] = Value::String(format!("{}-{}", cfg.name, hash));
    write_json(&dir.join("summary.json"), &stamped(&hash, summary_json))?;

    let mut files = Vec::new();
    collect_files(&dir, &dir, &mut files).map_err(io_err(&dir))?;
    let mut listing = serde_json::Map::new();
    for f in files {
        if f == "journal.jsonl" || f == "manifest.json" {
            // the journal's line order follows thread scheduling
            continue;
        }
        let bytes = fs::read(dir.join(&f)).map_err(io_err(&dir.join(&f)))?;
        listing.insert(f, Value::String(sha256_hex(&bytes)));
    }
    write_json(
        &dir.join("manifest.json"),
        &stamped(&hash, json!({ "files": listing })),
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_plan_cycles_and_is_seeded() {
        let plan = GeneratorPlan::desk_scale(12, 3);
        let p = plan.params().unwrap();
        assert_eq!(p[0].n_cities, 20);
        assert_eq!(p[4].n_cities, 100);
        assert_eq!(p[5].item_factor, 3);
        assert_eq!(p[7].seed, 10);
        assert_eq!(plan.params().unwrap(), p);
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = ExperimentConfig::demo(Path::new("/tmp/x"), 1);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.cv_seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.artifact_dir(), b.artifact_dir());
        assert_eq!(ExperimentConfig::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn seeds_are_mandatory() {
        let a = ExperimentConfig::demo(Path::new("/tmp/x"), 1);
        let mut v: Value = serde_json::from_str(&a.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut a = ExperimentConfig::demo(Path::new("/tmp/x"), 1);
        a.instance_dir = Some("/nonexistent".into());
        assert!(matches!(a.validate(), Err(PipelineError::Config(_))));
        a.generate = None;
        assert!(matches!(a.validate(), Err(PipelineError::Config(_))));
        let mut b = ExperimentConfig::demo(Path::new("/tmp/x"), 1);
        b.feature_subset = Some(vec!["no_such_feature".into()]);
        assert!(b.validate().is_err());
    }
}

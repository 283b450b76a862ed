use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ttp_folio::analysis::{
    marginal_contribution, shapley_values, spearman_matrix, standalone_ranking, ward_order,
    CoalitionGame, ShapleyMethod,
};
use ttp_folio::benchmark::{
    export_scenario, import_scenario, make_cv_splits, run_matrix, PerformanceMatrix, Scenario,
};
use ttp_folio::features::{extract_features, extract_header_features, FeatureVector};
use ttp_folio::instance::{
    generate_instance, parse_instance, write_instance, GeneratorParams, KpType,
};
use ttp_folio::pipeline::{
    compute_features, load_instances, run_pipeline, stamped, write_report, ExperimentConfig,
    GeneratorPlan, PipelineError, ReportOptions, TOOL_VERSION,
};
use ttp_folio::selection::{
    evaluate_selector, train_selector, Dataset, Family, SelectorConfig, TrainedSelector,
};
use ttp_folio::solvers::{default_roster, run_solver, SolverSpec};
use ttp_folio::{Solution, TtpInstance};

#[derive(Parser)]
#[command(
    name = "ttpfolio",
    version,
    about = "Traveling Thief Problem portfolio toolkit"
)]
struct Cli {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one instance, or a grid of instances with --count.
    Gen(GenArgs),
    /// Run one solver on an instance.
    Solve(SolveArgs),
    /// Evaluate a solution file.
    Eval {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Extract instance features.
    Features {
        #[arg(long)]
        instance: PathBuf,
        /// Only the eight header features.
        #[arg(long)]
        header_only: bool,
    },
    /// Benchmark a roster on a directory of instances.
    Bench(BenchArgs),
    /// Build scenarios from benchmark output.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
    /// Train a selector on a whole scenario.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        family: String,
        /// Comma-separated feature names.
        #[arg(long)]
        features: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Pick an algorithm with a trained selector.
    Select {
        #[arg(long)]
        model: PathBuf,
        /// Feature JSON as written by `features --json`.
        #[arg(long, conflicts_with = "instance")]
        features: Option<PathBuf>,
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Cross-validate a selector family on a scenario.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        family: String,
        #[arg(long)]
        features: Option<String>,
    },
    /// Portfolio analysis of a scenario.
    Analyze {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        /// Monte Carlo Shapley with this many permutations instead of exact.
        #[arg(long)]
        samples: Option<usize>,
        /// `.json` or `.csv`; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// All report tables for a scenario.
    Report {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated selector families.
        #[arg(long, default_value = "regression,pairwise_rf,clustering,knn")]
        families: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a whole experiment from a JSON config.
    Pipeline {
        #[arg(long, required_unless_present = "demo")]
        config: Option<PathBuf>,
        /// Run the built-in demo configuration into --output.
        #[arg(long, requires = "output")]
        demo: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(short = 'n', long, default_value_t = 50)]
    cities: usize,
    #[arg(short = 'f', long, default_value_t = 3)]
    items_per_city: usize,
    #[arg(long, default_value = "unc")]
    kp: String,
    #[arg(short = 'c', long, default_value_t = 5)]
    capacity_class: u32,
    /// Generate the desk-scale grid of this many instances into a directory.
    #[arg(long)]
    count: Option<usize>,
    /// Output file, or directory with --count.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    solver: String,
    #[arg(long, default_value_t = 2000)]
    budget_ms: u64,
    #[arg(long, conflicts_with = "work")]
    iters: Option<u64>,
    #[arg(long)]
    work: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    instances: PathBuf,
    /// JSON list of solver specs; the default roster when absent.
    #[arg(long)]
    roster: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    budget_ms: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Combine a benchmark matrix with instance features and CV folds.
    Export {
        #[arg(long)]
        instances: PathBuf,
        /// `matrix.json` written by `bench`.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value = "scenario")]
        name: String,
        /// Record work estimates instead of measured extraction times.
        #[arg(long)]
        deterministic_costs: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Spearman,
    Ward,
    Shapley,
    Marginal,
    Standalone,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value");
    s.push('\n');
    s
}

fn load_instance(path: &Path) -> Result<TtpInstance> {
    parse_instance(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn feature_list(s: &Option<String>) -> Option<Vec<&str>> {
    s.as_ref().map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .collect()
    })
}

fn dataset(scenario: &Scenario, features: &Option<String>) -> Result<Dataset> {
    let d = Dataset::from_scenario(scenario);
    Ok(match feature_list(features) {
        Some(names) => d.with_features(&names)?,
        None => d,
    })
}

/// Output of one command: JSON plus its text rendering.
struct Out {
    json: Value,
    text: String,
}

fn run(cli: &Cli) -> Result<Out> {
    let seed = cli.seed;
    match &cli.cmd {
        Cmd::Gen(a) => {
            if let Some(count) = a.count {
                let plan = GeneratorPlan::desk_scale(count, seed);
                let insts = plan.instances()?;
                for inst in &insts {
                    write(
                        &a.output.join(format!("{}.ttp", inst.name)),
                        &write_instance(inst),
                    )?;
                }
                let names: Vec<&str> = insts.iter().map(|i| i.name.as_str()).collect();
                return Ok(Out {
                    text: format!("wrote {} instances to {}", insts.len(), a.output.display()),
                    json: json!({ "instances": names, "dir": a.output }),
                });
            }
            let kp: KpType = a.kp.parse().map_err(|e: String| anyhow!(e))?;
            let params =
                GeneratorParams::new(a.cities, a.items_per_city, kp, a.capacity_class, seed);
            let inst = generate_instance(&params)?;
            write(&a.output, &write_instance(&inst))?;
            Ok(Out {
                text: format!("wrote {} to {}", inst.name, a.output.display()),
                json: json!({ "instance": inst.name, "path": a.output }),
            })
        }
        Cmd::Solve(a) => {
            let inst = load_instance(&a.instance)?;
            let mut spec = SolverSpec::new(&a.solver, seed, a.budget_ms);
            spec.iters = a.iters;
            spec.work = a.work;
            let res = run_solver(&spec, &inst)?;
            if let (Some(out), Some(sol)) = (&a.output, &res.solution) {
                write(out, &sol.to_text())?;
            }
            let z = res.objective();
            Ok(Out {
                text: match z {
                    Some(z) => format!("{} {:?} Z = {z}", res.algorithm, res.status),
                    None => format!("{} {:?}", res.algorithm, res.status),
                },
                json: json!({
                    "algorithm": res.algorithm,
                    "status": res.status,
                    "objective": z,
                    "iterations": res.iterations,
                    "elapsed_ms": res.elapsed_ms,
                }),
            })
        }
        Cmd::Eval { instance, solution } => {
            let inst = load_instance(instance)?;
            let sol = Solution::from_text(&inst, &read(solution)?)?;
            Ok(Out {
                text: format!("Z = {}", sol.objective),
                json: json!({ "objective": sol.objective }),
            })
        }
        Cmd::Features {
            instance,
            header_only,
        } => {
            let inst = load_instance(instance)?;
            if *header_only {
                let h = extract_header_features(&inst);
                let text = h.iter().map(|(k, v)| format!("{k} {v}\n")).collect();
                let map: serde_json::Map<String, Value> = h
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), json!(v)))
                    .collect();
                return Ok(Out {
                    text,
                    json: Value::Object(map),
                });
            }
            let fv = extract_features(&inst)?;
            let text = fv.iter().map(|(k, v)| format!("{k} {v}\n")).collect();
            Ok(Out {
                text,
                json: fv.to_json(),
            })
        }
        Cmd::Bench(a) => {
            let insts = load_instances(&a.instances)?;
            let roster: Vec<SolverSpec> = match &a.roster {
                Some(p) => serde_json::from_str(&read(p)?).context("parsing roster")?,
                None => default_roster(seed, a.budget_ms),
            };
            fs::create_dir_all(&a.output)?;
            let m = run_matrix(
                &insts,
                &roster,
                a.workers,
                Some(&a.output.join("journal.jsonl")),
            )?;
            write(&a.output.join("performance.csv"), &m.to_csv())?;
            write(
                &a.output.join("matrix.json"),
                &pretty(&serde_json::to_value(&m)?),
            )?;
            let missing = m.raw.iter().flatten().filter(|c| c.is_none()).count();
            Ok(Out {
                text: format!(
                    "{} instances x {} solvers, {missing} missing; wrote {}",
                    m.instances.len(),
                    m.algorithms.len(),
                    a.output.display()
                ),
                json: json!({ "instances": m.instances.len(), "algorithms": m.algorithms, "missing": missing }),
            })
        }
        Cmd::Scenario {
            cmd:
                ScenarioCmd::Export {
                    instances,
                    matrix,
                    folds,
                    name,
                    deterministic_costs,
                    output,
                },
        } => {
            let insts = load_instances(instances)?;
            let m: PerformanceMatrix =
                serde_json::from_str(&read(matrix)?).context("parsing matrix")?;
            let by_name: std::collections::HashMap<&str, &TtpInstance> =
                insts.iter().map(|i| (i.name.as_str(), i)).collect();
            let ordered: Vec<TtpInstance> = m
                .instances
                .iter()
                .map(|id| {
                    by_name
                        .get(id.as_str())
                        .map(|i| (*i).clone())
                        .ok_or_else(|| anyhow!("instance `{id}` not found"))
                })
                .collect::<Result<_>>()?;
            let feats = compute_features(&ordered, *deterministic_costs)?;
            let splits = make_cv_splits(&m.instances, *folds, seed)?;
            let unit = if *deterministic_costs {
                "work_units"
            } else {
                "ms"
            };
            let s = Scenario::new(name, m, feats, splits, unit)?;
            export_scenario(&s, output)?;
            Ok(Out {
                text: format!("wrote scenario to {}", output.display()),
                json: json!({ "scenario": output, "instances": s.matrix.instances.len() }),
            })
        }
        Cmd::Train {
            scenario,
            family,
            features,
            output,
        } => {
            let s = import_scenario(scenario)?;
            let fam: Family = family.parse()?;
            let data = dataset(&s, features)?;
            let sel = train_selector(fam, &data, None, &SelectorConfig::with_seed(seed))?;
            write(output, &sel.to_json())?;
            Ok(Out {
                text: format!(
                    "trained {} selector on {} instances",
                    fam.name(),
                    data.instances.len()
                ),
                json: json!({ "family": fam.name(), "model": output }),
            })
        }
        Cmd::Select {
            model,
            features,
            instance,
        } => {
            let sel = TrainedSelector::from_json(&read(model)?)?;
            let fv = match (features, instance) {
                (Some(p), _) => {
                    let v: Value =
                        serde_json::from_str(&read(p)?).context("parsing feature file")?;
                    if !v.is_object() {
                        bail!("feature file must hold a JSON object");
                    }
                    FeatureVector::from_json(&v)?
                }
                (None, Some(p)) => extract_features(&load_instance(p)?)?,
                (None, None) => bail!("pass --features or --instance"),
            };
            let algo = sel.select_features(&fv)?.to_string();
            Ok(Out {
                text: algo.clone(),
                json: json!({ "algorithm": algo }),
            })
        }
        Cmd::Evaluate {
            scenario,
            family,
            features,
        } => {
            let s = import_scenario(scenario)?;
            let fam: Family = family.parse()?;
            let r = evaluate_selector(
                fam,
                &dataset(&s, features)?,
                &SelectorConfig::with_seed(seed),
            )?;
            let v = serde_json::to_value(&r)?;
            Ok(Out {
                text: pretty(&v),
                json: v,
            })
        }
        Cmd::Analyze {
            scenario,
            what,
            samples,
            output,
        } => {
            let s = import_scenario(scenario)?;
            let method = match samples {
                Some(k) => ShapleyMethod::MonteCarlo { samples: *k, seed },
                None => ShapleyMethod::Exact,
            };
            let (v, csv) = match what {
                What::Spearman => {
                    let c = spearman_matrix(&s.scaled)?;
                    for w in &c.warnings {
                        eprintln!("warning: {w}");
                    }
                    (serde_json::to_value(&c)?, c.to_csv())
                }
                What::Ward => {
                    let t = ward_order(&spearman_matrix(&s.scaled)?);
                    let mut csv = String::from("left,right,height,size\n");
                    for m in &t.merges {
                        csv.push_str(&format!("{},{},{},{}\n", m.left, m.right, m.height, m.size));
                    }
                    (serde_json::to_value(&t)?, csv)
                }
                What::Shapley => {
                    let r = shapley_values(&CoalitionGame::new(&s.scaled), method)?;
                    (serde_json::to_value(&r)?, r.to_csv())
                }
                What::Marginal => {
                    let g = CoalitionGame::new(&s.scaled);
                    let mut csv = String::from("algorithm,marginal\n");
                    let mut map = serde_json::Map::new();
                    for a in &g.algorithms {
                        let m = marginal_contribution(&g, a)?;
                        csv.push_str(&format!("{a},{m}\n"));
                        map.insert(a.clone(), json!(m));
                    }
                    (Value::Object(map), csv)
                }
                What::Standalone => {
                    let r = standalone_ranking(&s.scaled);
                    let mut csv = String::from("algorithm,mean_scaled\n");
                    for (a, m) in &r {
                        csv.push_str(&format!("{a},{m}\n"));
                    }
                    (serde_json::to_value(&r)?, csv)
                }
            };
            if let Some(out) = output {
                let is_json = out.extension().is_some_and(|e| e == "json");
                write(out, &if is_json { pretty(&v) } else { csv.clone() })?;
            }
            Ok(Out { text: csv, json: v })
        }
        Cmd::Report {
            scenario,
            families,
            output,
        } => {
            let s = import_scenario(scenario)?;
            let fams = families
                .split(',')
                .map(|f| f.trim().parse())
                .collect::<Result<Vec<Family>, _>>()?;
            let opts = ReportOptions {
                families: fams,
                feature_subset: None,
                selector: SelectorConfig::with_seed(seed),
                shapley: ShapleyMethod::Exact,
            };
            let summary = write_report(&s, &opts, "none", output)?;
            let v = serde_json::to_value(&summary)?;
            let text = summary
                .selectors
                .iter()
                .map(|r| format!("{} gap_closed {}\n", r.family, r.gap_closed))
                .collect();
            Ok(Out {
                text,
                json: stamped("none", v),
            })
        }
        Cmd::Pipeline {
            config,
            demo,
            output,
        } => {
            let cfg = match (config, demo) {
                (Some(p), _) => ExperimentConfig::from_json(&read(p)?)?,
                (None, true) => {
                    ExperimentConfig::demo(output.as_deref().expect("required by clap"), seed)
                }
                (None, false) => bail!("pass --config or --demo"),
            };
            let summary = run_pipeline(&cfg)?;
            let text = format!(
                "artifacts in {}\n{}",
                summary.dir.display(),
                summary
                    .gap_closed
                    .iter()
                    .map(|(k, v)| format!("{k} gap_closed {v}\n"))
                    .collect::<String>()
            );
            Ok(Out {
                text,
                json: serde_json::to_value(&summary)?,
            })
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        return p.kind();
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "error"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                let v = match out.json {
                    Value::Object(mut m) => {
                        m.entry("tool_version").or_insert(json!(TOOL_VERSION));
                        Value::Object(m)
                    }
                    other => other,
                };
                print!("{}", pretty(&v));
            } else {
                print!("{}", out.text);
                if !out.text.ends_with('\n') {
                    println!();
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                eprint!(
                    "{}",
                    pretty(
                        &json!({ "error": error_kind(&e), "message": format!("{e:#}"), "tool_version": TOOL_VERSION })
                    )
                );
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}

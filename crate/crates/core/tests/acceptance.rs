//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Reference values are computed here by
//! independent brute-force code, not by the library.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ttp_folio::analysis::{
    shapley_values, spearman, spearman_matrix, ward_order, CoalitionGame, ShapleyMethod,
};
use ttp_folio::benchmark::{make_cv_splits, run_matrix, scale_scores, PerformanceMatrix, Scenario};
use ttp_folio::features::{
    extract_features, extract_header_features, FeatureVector, FEATURE_NAMES, NUM_GEOMETRIC,
    TOP5_HEADER,
};
use ttp_folio::instance::{
    four_city_example, generate_instance, parse_instance, write_instance, EdgeWeightKind,
    GeneratorParams, KpType, Point, TtpInstance,
};
use ttp_folio::pipeline::{compute_features, run_pipeline, ExperimentConfig, GeneratorPlan};
use ttp_folio::selection::{
    evaluate_selector, select_with_subset, Dataset, Family, SelectorConfig,
};
use ttp_folio::solvers::{
    default_roster, nearest_neighbor_tour, pack_iterative, run_solver, two_opt, Budget,
};
use ttp_folio::{objective, PackingPlan, Tour};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

fn oracle_dist(inst: &TtpInstance, a: usize, b: usize) -> f64 {
    let (p, q) = (inst.coords[a], inst.coords[b]);
    let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
    match inst.edge_weight_kind {
        EdgeWeightKind::CeilEuclidean2D => d.ceil(),
        EdgeWeightKind::Euclidean2D => d,
    }
}

/// Objective by the textbook definition; `None` when over capacity.
fn oracle_z(inst: &TtpInstance, order: &[usize], picked: &[bool]) -> Option<f64> {
    let mut at_city = vec![0.0; inst.coords.len()];
    let (mut profit, mut weight) = (0.0, 0.0);
    for (item, &p) in inst.items.iter().zip(picked) {
        if p {
            profit += item.profit;
            weight += item.weight;
            at_city[item.city] += item.weight;
        }
    }
    if weight > inst.capacity {
        return None;
    }
    let nu = (inst.max_speed - inst.min_speed) / inst.capacity;
    let mut load = 0.0;
    let mut time = 0.0;
    for k in 0..order.len() {
        load += at_city[order[k]];
        let next = order[(k + 1) % order.len()];
        time += oracle_dist(inst, order[k], next) / (inst.max_speed - nu * load);
    }
    Some(profit - inst.renting_rate * time)
}

fn tour_length(inst: &TtpInstance, order: &[usize]) -> f64 {
    (0..order.len())
        .map(|k| oracle_dist(inst, order[k], order[(k + 1) % order.len()]))
        .sum()
}

/// All tours starting at city 0.
fn all_tours(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let c = left.remove(i);
            prefix.push(c);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(i, c);
        }
    }
    let mut out = Vec::new();
    rec(&mut vec![0], &mut (1..n).collect(), &mut out);
    out
}

fn best_plan_for(inst: &TtpInstance, order: &[usize]) -> f64 {
    let m = inst.items.len();
    (0u32..1 << m)
        .filter_map(|mask| {
            let picked: Vec<bool> = (0..m).map(|k| mask >> k & 1 == 1).collect();
            oracle_z(inst, order, &picked)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- criteria

fn objective_correctness() -> Verdict {
    let inst = four_city_example();
    let z = objective(
        &inst,
        &Tour::from_ids(&[1, 2, 4, 3]),
        &PackingPlan::from_ids(6, &[4, 5]),
    )
    .unwrap();
    if z != 50.0 {
        return verdict(false, format!("worked example gives {z}"));
    }
    let mut worst: f64 = 0.0;
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..80);
        let f = GeneratorParams::ITEM_FACTORS[seed as usize % 4];
        let mut inst = generate_instance(&GeneratorParams::new(
            n,
            f,
            KpType::ALL[seed as usize % 3],
            rng.random_range(1..=10),
            seed,
        ))
        .unwrap();
        let mut order: Vec<usize> = (1..n).collect();
        order.shuffle(&mut rng);
        order.insert(0, 0);
        let tour = Tour::new(order.clone());
        let mut picked = vec![false; inst.items.len()];
        let mut w = 0.0;
        for k in 0..inst.items.len() {
            if rng.random_bool(0.5) && w + inst.items[k].weight <= inst.capacity {
                picked[k] = true;
                w += inst.items[k].weight;
            }
        }
        let plan = PackingPlan {
            picked: picked.clone(),
        };
        let empty = PackingPlan::empty(inst.items.len());
        let z_empty = objective(&inst, &tour, &empty).unwrap();
        let want = -inst.renting_rate * tour_length(&inst, &order) / inst.max_speed;
        worst = worst.max((z_empty - want).abs());
        inst.renting_rate = 0.0;
        let z_free = objective(&inst, &tour, &plan).unwrap();
        let profit: f64 = inst
            .items
            .iter()
            .zip(&picked)
            .filter(|p| *p.1)
            .map(|p| p.0.profit)
            .sum();
        worst = worst.max((z_free - profit).abs());
    }
    verdict(
        worst <= 1e-9,
        format!("worked example Z = 50; max reduction error {worst:.2e} over 40 instances"),
    )
}

fn brute_force_equivalence() -> Verdict {
    let roster = default_roster(1, 2000);
    let results: Vec<(bool, bool, String)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let n = 4 + (seed % 5) as usize;
            let f = if (n - 1) * 3 <= 12 { 3 } else { 1 };
            let inst = generate_instance(&GeneratorParams::new(
                n,
                f,
                KpType::ALL[seed as usize % 3],
                1 + (seed % 10) as u32,
                seed,
            ))
            .unwrap();
            assert!(n <= 8 && inst.items.len() <= 12);
            let opt = all_tours(n)
                .iter()
                .map(|t| best_plan_for(&inst, t))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut bounded = true;
            let mut note = String::new();
            for spec in &roster {
                let res = run_solver(spec, &inst).unwrap();
                let Some(sol) = res.solution else { continue };
                let z = oracle_z(&inst, &sol.tour.order, &sol.plan.picked);
                let ok = z.is_some_and(|z| z <= opt + 1e-9 * opt.abs().max(1.0))
                    && close(z.unwrap(), sol.objective, 1e-9);
                if !ok {
                    bounded = false;
                    note = format!("{} on {}: {:?} vs optimum {opt}", spec.name, inst.name, z);
                }
            }
            let tour = two_opt(
                &inst,
                &nearest_neighbor_tour(&inst, seed),
                Budget::Unlimited,
            );
            let best_fixed = best_plan_for(&inst, &tour.order);
            let pi = pack_iterative(&inst, &tour);
            let z_pi = oracle_z(&inst, &tour.order, &pi.picked).unwrap();
            (
                bounded,
                z_pi >= best_fixed - 1e-9 * best_fixed.abs().max(1.0),
                note,
            )
        })
        .collect();
    let bounded = results.iter().all(|r| r.0);
    let hits = results.iter().filter(|r| r.1).count();
    let note = results
        .iter()
        .find(|r| !r.0)
        .map_or(String::new(), |r| format!("; {}", r.2));
    verdict(
        bounded && hits * 100 >= 70 * results.len(),
        format!(
            "all solver objectives <= optimum: {bounded}; pack_iterative optimal on {hits}/{} fixed tours{note}",
            results.len()
        ),
    )
}

fn scaling_semantics() -> Verdict {
    let cell = prop_oneof![
        6 => (-1e4f64..1e4).prop_map(Some),
        2 => Just(None),
        2 => Just(Some(7.5)),
    ];
    let row = prop::collection::vec(cell, 1..10)
        .prop_filter("one value", |r| r.iter().any(Option::is_some));
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&row, |row| {
        let m = PerformanceMatrix::from_values(
            vec!["i".into()],
            (0..row.len()).map(|j| format!("a{j}")).collect(),
            vec![row.clone()],
        );
        let s = scale_scores(&m).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let got = &s.scaled[0];
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        let best = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst = present.iter().copied().fold(f64::INFINITY, f64::min);
        for (c, &g) in row.iter().zip(got) {
            let want = match c {
                None => -1.0,
                Some(_) if best == worst => 1.0,
                Some(z) if *z == best => 1.0,
                Some(z) if *z == worst => 0.0,
                Some(z) => (z - worst) / (best - worst),
            };
            prop_assert_eq!(g, want);
        }
        Ok(())
    });
    match result {
        Ok(()) => verdict(
            true,
            "1000 random rows: max -> 1, min -> 0, Missing -> -1, linear between",
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn with_coords(coords: &[(f64, f64)]) -> TtpInstance {
    let mut inst = four_city_example();
    inst.edge_weight_kind = EdgeWeightKind::Euclidean2D;
    inst.coords = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();
    let n = coords.len();
    inst.items.retain(|it| it.city < n);
    for (k, it) in inst.items.iter_mut().enumerate() {
        it.id = k + 1;
    }
    inst
}

fn oracle_expected_tour(coords: &[Point]) -> f64 {
    let (x0, x1) = coords
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
            (a.0.min(p.x), a.1.max(p.x))
        });
    let (y0, y1) = coords
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
            (a.0.min(p.y), a.1.max(p.y))
        });
    let sx = if x1 > x0 { x1 - x0 } else { 1.0 };
    let sy = if y1 > y0 { y1 - y0 } else { 1.0 };
    let norm: Vec<(f64, f64)> = coords
        .iter()
        .map(|p| ((p.x - x0) / sx, (p.y - y0) / sy))
        .collect();
    let n = norm.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += ((norm[i].0 - norm[j].0).powi(2) + (norm[i].1 - norm[j].1).powi(2)).sqrt();
        }
    }
    // a uniformly random tour uses n of the n(n-1)/2 edges, each equally likely
    n as f64 * sum / (n * (n - 1) / 2) as f64
}

fn feature_suite() -> Verdict {
    let mut problems = Vec::new();
    let mut worst_tour: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = [3, 4, 10, 50, 120, 300][seed as usize % 6];
        let inst = generate_instance(&GeneratorParams::new(
            n,
            GeneratorParams::ITEM_FACTORS[seed as usize % 4],
            KpType::ALL[seed as usize % 3],
            rng.random_range(1..=10),
            seed,
        ))
        .unwrap();
        let f = extract_features(&inst).unwrap();
        if f.values.len() != 55 || f.values.iter().any(|v| !v.is_finite()) {
            problems.push(format!("{}: non-finite or missing features", inst.name));
        }
        let d = f.get("distance_expected_random_tour_length").unwrap()
            - oracle_expected_tour(&inst.coords);
        worst_tour = worst_tour.max(d.abs());
        let s = [0.37, 2.5, 1234.5][seed as usize % 3];
        let (tx, ty) = (rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4));
        let mut moved = inst.clone();
        for p in &mut moved.coords {
            *p = Point::new(p.x * s + tx, p.y * s + ty);
        }
        let g = extract_features(&moved).unwrap();
        for k in 0..NUM_GEOMETRIC {
            let diff = (f.values[k] - g.values[k]).abs();
            worst_inv = worst_inv.max(diff);
            if diff > 1e-12 {
                problems.push(format!(
                    "{} {} moved by {diff:.2e}",
                    inst.name, FEATURE_NAMES[k]
                ));
            }
        }
    }
    if worst_tour > 1e-9 {
        problems.push(format!("expected tour length off by {worst_tour:.2e}"));
    }
    let pi = std::f64::consts::PI;
    let line = extract_features(&with_coords(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)])).unwrap();
    let square = extract_features(&with_coords(&[
        (0.0, 0.0),
        (4.0, 0.0),
        (4.0, 4.0),
        (0.0, 4.0),
    ]))
    .unwrap();
    let fixtures: [(&FeatureVector, &str, f64); 14] = [
        (&line, "distance_mean", 2.0 / 3.0),
        (&line, "distance_expected_random_tour_length", 2.0),
        (&line, "angle_mean", pi / 3.0),
        (&line, "angle_max", pi),
        (&line, "mst_dist_sum_norm", 0.5),
        (&line, "mst_depth_max", 2.0),
        (&line, "hull_area", 0.0),
        (&line, "hull_frac", 2.0 / 3.0),
        (&square, "hull_area", 1.0),
        (&square, "hull_frac", 1.0),
        (&square, "angle_mean", pi / 2.0),
        (&square, "distance_max", 2f64.sqrt()),
        (&square, "centroid_max_dist", 0.5f64.sqrt()),
        (
            &square,
            "distance_expected_random_tour_length",
            4.0 * (4.0 + 2.0 * 2f64.sqrt()) / 6.0,
        ),
    ];
    for (fv, name, want) in fixtures {
        let got = fv.get(name).unwrap();
        if (got - want).abs() > 1e-12 {
            problems.push(format!("fixture {name}: {got} != {want}"));
        }
    }
    verdict(
        problems.is_empty(),
        format!(
            "55 features on 30 instances; tour oracle error {worst_tour:.1e}; invariance error {worst_inv:.1e}; {} fixture checks{}",
            fixtures.len(),
            problems.first().map_or(String::new(), |p| format!("; first problem: {p}"))
        ),
    )
}

/// The generated selection scenario shared by criteria 5 and 6.
fn generated_scenario() -> Scenario {
    let plan = GeneratorPlan::desk_scale(300, 1);
    let insts = plan.instances().unwrap();
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let m = run_matrix(&insts, &default_roster(1, 2000), workers, None).unwrap();
    let feats = compute_features(&insts, true).unwrap();
    let splits = make_cv_splits(&m.instances, 10, 1).unwrap();
    Scenario::new("generated", m, feats, splits, "work_units").unwrap()
}

fn planted_scenario() -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 200;
    let key = FEATURE_NAMES
        .iter()
        .position(|f| *f == "number_of_items")
        .unwrap();
    let mut feats = Vec::new();
    let mut raw = Vec::new();
    for _ in 0..n {
        let values: Vec<f64> = (0..FEATURE_NAMES.len())
            .map(|_| rng.random::<f64>())
            .collect();
        let regime = values[key] > 0.5;
        let noise = |r: &mut ChaCha8Rng| r.random_range(0.0..0.1);
        let (a, b) = if regime { (1.0, 0.3) } else { (0.3, 1.0) };
        raw.push(vec![
            Some(a + noise(&mut rng)),
            Some(b + noise(&mut rng)),
            Some(0.6 + noise(&mut rng)),
            Some(0.5 + noise(&mut rng)),
        ]);
        feats.push(FeatureVector {
            values,
            extraction_ms: BTreeMap::new(),
            approximate: false,
        });
    }
    let ids: Vec<String> = (0..n).map(|i| format!("planted-{i}")).collect();
    let m = PerformanceMatrix::from_values(
        ids.clone(),
        ["A", "B", "C", "D"].map(String::from).to_vec(),
        raw,
    );
    let splits = make_cv_splits(&ids, 10, 2).unwrap();
    Scenario::new("planted", m, feats, splits, "ms").unwrap()
}

fn selector_gap(scenario: &Scenario) -> (Verdict, f64) {
    let data = Dataset::from_scenario(scenario);
    let cfg = SelectorConfig::with_seed(1);
    let full = evaluate_selector(Family::PairwiseRF, &data, &cfg).unwrap();
    let planted = evaluate_selector(
        Family::PairwiseRF,
        &Dataset::from_scenario(&planted_scenario()),
        &cfg,
    )
    .unwrap();
    let pass = full.mean > full.single_best && full.gap_closed >= 0.5 && planted.gap_closed >= 0.9;
    (
        verdict(
            pass,
            format!(
                "generated: selector {:.4} vs single best {:.4} ({}), oracle {:.4}, gap closed {:.3}; planted: gap closed {:.3}",
                full.mean, full.single_best, full.single_best_algorithm, full.oracle, full.gap_closed, planted.gap_closed
            ),
        ),
        full.gap_closed,
    )
}

fn header_subset(scenario: &Scenario, full_gap: f64) -> Verdict {
    let data = Dataset::from_scenario(scenario);
    let sub = select_with_subset(
        &data,
        &TOP5_HEADER,
        Family::PairwiseRF,
        &SelectorConfig::with_seed(1),
    )
    .unwrap();
    let insts: Vec<TtpInstance> = GeneratorPlan::desk_scale(300, 1)
        .instances()
        .unwrap()
        .iter()
        .map(|i| parse_instance(&write_instance(i)).unwrap())
        .collect();
    let mut slowest = Duration::ZERO;
    for inst in &insts {
        let t = Instant::now();
        let h = extract_header_features(inst);
        slowest = slowest.max(t.elapsed());
        assert_eq!(h.len(), 8);
    }
    let ratio = if full_gap > 0.0 {
        sub.gap_closed / full_gap
    } else {
        0.0
    };
    verdict(
        ratio >= 0.9 && slowest < Duration::from_millis(1),
        format!(
            "top-5 header gap closed {:.3} = {:.1}% of full {:.3}; slowest header extraction {:?}",
            sub.gap_closed,
            100.0 * ratio,
            full_gap,
            slowest
        ),
    )
}

/// `v(S)` straight from the definition.
fn oracle_value(rows: &[Vec<f64>], members: &[usize]) -> f64 {
    rows.iter()
        .map(|r| members.iter().map(|&a| r[a].max(0.0)).fold(0.0, f64::max))
        .sum::<f64>()
        / rows.len() as f64
}

fn brute_shapley(rows: &[Vec<f64>], a: usize) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..a).collect();
    let mut phi = vec![0.0; a];
    let mut count = 0usize;
    // Heap's algorithm over all a! orders
    fn visit(rows: &[Vec<f64>], perm: &[usize], phi: &mut [f64]) {
        let mut prefix = Vec::new();
        let mut before = 0.0;
        for &p in perm {
            prefix.push(p);
            let after = oracle_value(rows, &prefix);
            phi[p] += after - before;
            before = after;
        }
    }
    let mut c = vec![0usize; a];
    visit(rows, &perm, &mut phi);
    count += 1;
    let mut i = 0;
    while i < a {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(rows, &perm, &mut phi);
            count += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|v| v / count as f64).collect()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, a: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..a)
                .map(|_| match rng.random_range(0..10) {
                    0 => -1.0,
                    1 => 1.0,
                    // coarse grid values produce ties
                    2 | 3 => rng.random_range(0..5) as f64 / 4.0,
                    _ => rng.random::<f64>(),
                })
                .collect()
        })
        .collect()
}

fn shapley_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let names = |a: usize| (0..a).map(|j| format!("a{j}")).collect::<Vec<_>>();
    let (mut worst_brute, mut worst_eff): (f64, f64) = (0.0, 0.0);
    let mut symmetric = true;
    for trial in 0..24 {
        let a = 1 + trial % 6;
        let mut rows = random_rows(&mut rng, 20, a);
        if a >= 2 && trial % 2 == 0 {
            // make the last player a twin of the first
            for r in &mut rows {
                r[a - 1] = r[0];
            }
        }
        let game = CoalitionGame::from_scores(names(a), &rows);
        let exact = shapley_values(&game, ShapleyMethod::Exact)
            .unwrap()
            .shapley();
        let brute = brute_shapley(&rows, a);
        for (x, y) in exact.iter().zip(&brute) {
            worst_brute = worst_brute.max((x - y).abs());
        }
        let total: f64 = exact.iter().sum();
        worst_eff = worst_eff.max((total - oracle_value(&rows, &(0..a).collect::<Vec<_>>())).abs());
        if a >= 2 && trial % 2 == 0 && exact[0].to_bits() != exact[a - 1].to_bits() {
            symmetric = false;
        }
    }
    let mut mc_ok = true;
    let mut worst_z: f64 = 0.0;
    for seed in 0..3 {
        let rows = random_rows(&mut rng, 60, 10);
        let game = CoalitionGame::from_scores(names(10), &rows);
        let exact = shapley_values(&game, ShapleyMethod::Exact).unwrap();
        let mc = shapley_values(&game, ShapleyMethod::monte_carlo(seed)).unwrap();
        for (e, m) in exact.entries.iter().zip(&mc.entries) {
            let diff = (e.shapley - m.shapley).abs();
            if m.std_error > 0.0 {
                worst_z = worst_z.max(diff / m.std_error);
            }
            if diff > 3.0 * m.std_error + 1e-12 {
                mc_ok = false;
            }
        }
    }
    verdict(
        worst_brute <= 1e-9 && worst_eff <= 1e-12 && symmetric && mc_ok,
        format!(
            "exact vs factorial brute force max error {worst_brute:.1e}; efficiency error {worst_eff:.1e}; twins bit-equal: {symmetric}; Monte Carlo max deviation {worst_z:.2} standard errors"
        ),
    )
}

fn spearman_ward() -> Verdict {
    let mut problems: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let col: Vec<f64> = (0..30)
            .map(|_| rng.random_range(0..12) as f64 / 11.0)
            .collect();
        if spearman(&col, &col) != Some(1.0) {
            problems.push("self-correlation is not 1".into());
        }
    }
    let matrix = (2usize..6, 3usize..40).prop_flat_map(|(a, n)| {
        (
            prop::collection::vec(prop::collection::vec(0i32..50, a), n),
            0..a,
            0usize..4,
        )
    });
    let mut runner = TestRunner::new(Config {
        cases: 300,
        failure_persistence: None,
        ..Config::default()
    });
    let transforms: [fn(f64) -> f64; 4] = [
        |x| 3.0 * x + 2.0,
        |x| x * x * x + x,
        f64::exp,
        |x| (x / 60.0).atan(),
    ];
    let result = runner.run(&matrix, |(grid, col, t)| {
        let rows: Vec<Vec<f64>> = grid
            .iter()
            .map(|r| r.iter().map(|&v| v as f64 / 10.0).collect())
            .collect();
        let algos: Vec<String> = (0..rows[0].len()).map(|j| format!("a{j}")).collect();
        let scaled = |rows: Vec<Vec<f64>>| ttp_folio::benchmark::ScaledMatrix {
            instances: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            algorithms: algos.clone(),
            scaled: rows,
        };
        let before = spearman_matrix(&scaled(rows.clone())).unwrap();
        let mut moved = rows.clone();
        for r in &mut moved {
            r[col] = transforms[t](r[col]);
        }
        let after = spearman_matrix(&scaled(moved)).unwrap();
        prop_assert_eq!(&before.rho, &after.rho);
        for j in 0..algos.len() {
            prop_assert_eq!(before.rho[j][j], 1.0);
        }
        // a constant column has no rank information, so its twin is uncorrelated
        prop_assume!(rows.iter().any(|r| r[col] != rows[0][col]));
        let mut with_twin = rows.clone();
        for r in &mut with_twin {
            r.push(r[col]);
        }
        let mut twin_algos = algos.clone();
        twin_algos.push("twin".into());
        let m = ttp_folio::benchmark::ScaledMatrix {
            instances: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            algorithms: twin_algos,
            scaled: with_twin,
        };
        let corr = spearman_matrix(&m).unwrap();
        let tree = ward_order(&corr);
        let first = &tree.merges[0];
        prop_assert_eq!(first.height, 0.0);
        prop_assert_eq!(corr.rho[first.left][first.right], 1.0);
        // columns with identical ranks may tie with the twin at height 0
        let twin = algos.len();
        let joined = tree
            .merges
            .iter()
            .find(|s| s.left == twin || s.right == twin)
            .unwrap();
        prop_assert_eq!(joined.height, 0.0);
        let mut leaves = tree.leaf_order.clone();
        leaves.sort();
        prop_assert_eq!(leaves, (0..=twin).collect::<Vec<_>>());
        Ok(())
    });
    if let Err(e) = result {
        problems.push(e.to_string());
    }
    verdict(
        problems.is_empty(),
        problems.first().cloned().unwrap_or_else(|| {
            "self-correlation 1; 300 monotone-transform cases unchanged; duplicated columns merge first".into()
        }),
    )
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::demo(tmp.path(), 3);
    let first = run_pipeline(&cfg).unwrap();
    let mut a = tree_bytes(&first.dir);
    a.remove("journal.jsonl");
    // rerun in place: the journal is reused
    run_pipeline(&cfg).unwrap();
    let mut b = tree_bytes(&first.dir);
    b.remove("journal.jsonl");
    // rerun from scratch
    std::fs::remove_dir_all(&first.dir).unwrap();
    run_pipeline(&cfg).unwrap();
    let mut c = tree_bytes(&first.dir);
    c.remove("journal.jsonl");
    let differing: Vec<&String> = a
        .keys()
        .filter(|k| b.get(*k) != a.get(*k) || c.get(*k) != a.get(*k))
        .collect();
    let scenario_files = a.keys().filter(|k| k.starts_with("scenario")).count();
    let report_files = a.keys().filter(|k| k.starts_with("report")).count();
    verdict(
        differing.is_empty() && a.len() == b.len() && a.len() == c.len() && scenario_files > 0 && report_files > 0,
        format!(
            "{} artifacts ({scenario_files} scenario, {report_files} report) identical across journal reuse and a fresh rerun{}",
            a.len(),
            differing.first().map_or(String::new(), |k| format!("; differs: {k}"))
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report =
        |id: u32, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Verdict| {
            let t = Instant::now();
            let v = f();
            let took = t.elapsed();
            let in_time = limit.is_none_or(|l| took < l);
            let pass = v.pass && in_time;
            if !pass {
                failed += 1;
            }
            let limit_note = limit.map_or(String::new(), |l| format!(" (limit {l:?})"));
            println!(
                "criterion {id} [{name}]: {} in {took:.2?}{limit_note} - {}",
                if pass { "PASS" } else { "FAIL" },
                v.detail
            );
        };
    report(
        1,
        "objective",
        Some(Duration::from_secs(1)),
        &mut objective_correctness,
    );
    report(
        2,
        "brute-force oracle",
        Some(Duration::from_secs(120)),
        &mut brute_force_equivalence,
    );
    report(3, "score scaling", None, &mut scaling_semantics);
    report(
        4,
        "features",
        Some(Duration::from_secs(60)),
        &mut feature_suite,
    );
    let t = Instant::now();
    let scenario = generated_scenario();
    let build = t.elapsed();
    let mut gap = 0.0;
    report(
        5,
        "selector gap closure",
        Some(Duration::from_secs(1800).saturating_sub(build)),
        &mut || {
            let (v, g) = selector_gap(&scenario);
            gap = g;
            Verdict {
                pass: v.pass,
                detail: format!("{} (scenario built in {build:.1?})", v.detail),
            }
        },
    );
    report(6, "header features", None, &mut || {
        header_subset(&scenario, gap)
    });
    report(
        7,
        "shapley",
        Some(Duration::from_secs(120)),
        &mut shapley_correctness,
    );
    report(8, "spearman and ward", None, &mut spearman_ward);
    report(9, "determinism", None, &mut determinism);
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

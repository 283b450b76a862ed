use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ttp_folio::analysis::{shapley_values, CoalitionGame, ShapleyMethod};
use ttp_folio::benchmark::{make_cv_splits, scale_scores, PerformanceMatrix};
use ttp_folio::evaluation::{profit, travel_time, validate, PackingEvaluator};
use ttp_folio::features::extract_features;
use ttp_folio::instance::{
    generate_instance, parse_instance, write_instance, EdgeWeightKind, GeneratorParams, KpType,
    TtpInstance,
};
use ttp_folio::selection::{train_selector, Dataset, Family, SelectorConfig};
use ttp_folio::solvers::{
    bitflip, insertion, nearest_neighbor_tour, one_plus_one_ea, rls, sh_pack, two_opt, Budget,
};
use ttp_folio::{objective, PackingPlan, Solution, Tour};

fn params() -> impl Strategy<Value = GeneratorParams> {
    (
        3usize..40,
        prop::sample::select(GeneratorParams::ITEM_FACTORS.to_vec()),
        prop::sample::select(KpType::ALL.to_vec()),
        1u32..=10,
        any::<u64>(),
    )
        .prop_map(|(n, f, kp, c, seed)| GeneratorParams::new(n, f, kp, c, seed))
}

fn random_tour(n: usize, rng: &mut ChaCha8Rng) -> Tour {
    let mut rest: Vec<usize> = (1..n).collect();
    rest.shuffle(rng);
    rest.insert(0, 0);
    Tour::new(rest)
}

fn random_plan(inst: &TtpInstance, rng: &mut ChaCha8Rng) -> PackingPlan {
    let mut order: Vec<usize> = (0..inst.num_items()).collect();
    order.shuffle(rng);
    let mut plan = PackingPlan::empty(inst.num_items());
    let mut w = 0.0;
    for k in order.into_iter().take(inst.num_items() / 2 + 1) {
        if w + inst.items[k].weight <= inst.capacity {
            plan.picked[k] = true;
            w += inst.items[k].weight;
        }
    }
    plan
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn generated_instances_round_trip(p in params()) {
        let inst = generate_instance(&p).unwrap();
        prop_assert_eq!(inst.num_items(), (p.n_cities - 1) * p.item_factor);
        for (city, items) in inst.items_by_city().iter().enumerate() {
            prop_assert_eq!(items.len(), if city == 0 { 0 } else { p.item_factor });
        }
        prop_assert_eq!(parse_instance(&write_instance(&inst)).unwrap(), inst);
    }

    #[test]
    fn capacity_grows_with_class(p in params(), c in 1u32..10) {
        let lo = generate_instance(&GeneratorParams { capacity_class: c, ..p.clone() }).unwrap();
        let hi = generate_instance(&GeneratorParams { capacity_class: c + 1, ..p }).unwrap();
        prop_assert!(lo.capacity < hi.capacity);
    }

    #[test]
    fn euclidean_distance_is_a_metric(p in params(), a in 0usize..3, b in 0usize..3, c in 0usize..3) {
        let mut inst = generate_instance(&p).unwrap();
        inst.edge_weight_kind = EdgeWeightKind::Euclidean2D;
        let (a, b, c) = (a % inst.dimension(), b % inst.dimension(), c % inst.dimension());
        prop_assert_eq!(inst.dist(a, b), inst.dist(b, a));
        prop_assert!(inst.dist(a, c) <= inst.dist(a, b) + inst.dist(b, c) + 1e-9);
    }

    #[test]
    fn objective_splits_into_profit_and_rent(p in params(), seed in any::<u64>()) {
        let inst = generate_instance(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tour = random_tour(inst.dimension(), &mut rng);
        let plan = random_plan(&inst, &mut rng);
        let z = objective(&inst, &tour, &plan).unwrap();
        let lhs = z + inst.renting_rate * travel_time(&inst, &tour, &plan).unwrap();
        let rhs = profit(&inst, &plan);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn incremental_flips_match_full_evaluation(p in params(), seed in any::<u64>()) {
        let inst = generate_instance(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tour = random_tour(inst.dimension(), &mut rng);
        let mut ev = PackingEvaluator::new(&inst, &tour, &random_plan(&inst, &mut rng)).unwrap();
        for _ in 0..10 {
            let k = rand::Rng::random_range(&mut rng, 0..inst.num_items());
            if let Some(z) = ev.try_flip(k) {
                ev.apply_flips(&[k]);
                let full = objective(&inst, &tour, ev.plan()).unwrap();
                prop_assert!((z - full).abs() <= 1e-9 * full.abs().max(1.0));
                prop_assert!((ev.objective() - full).abs() <= 1e-9 * full.abs().max(1.0));
            }
        }
    }

    #[test]
    fn geometric_feature_bounds(p in params()) {
        let f = extract_features(&generate_instance(&p).unwrap()).unwrap();
        let g = |n: &str| f.get(n).unwrap();
        prop_assert!(g("distance_min") <= g("distance_median").min(g("distance_mean")));
        prop_assert!(g("distance_median").max(g("distance_mean")) <= g("distance_max"));
        prop_assert!((0.0..=1.0).contains(&g("distance_frac_shorter_than_mean")));
        prop_assert!(g("distance_frac_distinct") > 0.0 && g("distance_frac_distinct") <= 1.0);
        prop_assert!(g("mst_dist_sum_norm") > 0.0 && g("mst_dist_sum_norm") <= 1.0);
        prop_assert!(g("hull_frac") > 0.0 && g("hull_frac") <= 1.0);
        for name in ["nnd_min", "nnd_mean", "nnd_median", "nnd_max"] {
            prop_assert!(g(name) >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn hill_climbers_never_lose_ground(p in params(), seed in any::<u64>()) {
        let inst = generate_instance(&p).unwrap();
        let tour = two_opt(&inst, &nearest_neighbor_tour(&inst, seed), Budget::Unlimited);
        let plan = sh_pack(&inst, &tour);
        let start = Solution::evaluate(&inst, tour, plan).unwrap();
        let budget = Budget::Iterations(300);
        let runs = [
            rls(&inst, &start, budget, seed),
            one_plus_one_ea(&inst, &start, budget, seed),
            bitflip(&inst, &start, budget),
            insertion(&inst, &start, budget),
        ];
        for sol in runs {
            prop_assert!(validate(&inst, &sol.tour, &sol.plan).is_empty());
            prop_assert!(sol.objective >= start.objective);
        }
    }
}

fn score_row() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(
        prop_oneof![4 => (-50i32..50).prop_map(|v| Some(v as f64)), 1 => Just(None)],
        1..8,
    )
    .prop_filter("one value", |r| r.iter().any(Option::is_some))
}

fn scaled_rows(a: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(
            prop_oneof![1 => Just(-1.0), 6 => 0.0f64..=1.0, 1 => Just(1.0)],
            a,
        ),
        1..25,
    )
}

fn names(a: usize) -> Vec<String> {
    (0..a).map(|j| format!("a{j}")).collect()
}

proptest! {
    #[test]
    fn scaling_preserves_row_order(row in score_row()) {
        let m = PerformanceMatrix::from_values(vec!["i".into()], names(row.len()), vec![row.clone()]);
        let s = scale_scores(&m).unwrap();
        for (i, a) in row.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                if let (Some(a), Some(b)) = (a, b) {
                    prop_assert_eq!(a.partial_cmp(b), s.scaled[0][i].partial_cmp(&s.scaled[0][j]));
                }
            }
        }
    }

    #[test]
    fn scaling_ignores_positive_affine_maps(row in score_row(), a in 0.1f64..10.0, b in -100.0f64..100.0) {
        // exact in binary when a and b are dyadic
        let (a, b) = ((a * 8.0).round() / 8.0, b.round());
        let moved: Vec<Option<f64>> = row.iter().map(|v| v.map(|v| a * v + b)).collect();
        let s1 = scale_scores(&PerformanceMatrix::from_values(vec!["i".into()], names(row.len()), vec![row.clone()])).unwrap();
        let s2 = scale_scores(&PerformanceMatrix::from_values(vec!["i".into()], names(row.len()), vec![moved])).unwrap();
        for (x, y) in s1.scaled[0].iter().zip(&s2.scaled[0]) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn folds_are_balanced_partitions(n in 1usize..200, k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let ids: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let s = make_cv_splits(&ids, k, seed).unwrap();
        let sizes = s.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(s.folds.iter().all(|&f| (1..=k).contains(&f)));
    }

    #[test]
    fn coalition_value_is_monotone(rows in scaled_rows(5), s in 0u32..32, extra in 0u32..32) {
        let game = CoalitionGame::from_scores(names(5), &rows);
        let small: Vec<usize> = (0..5).filter(|j| s >> j & 1 == 1).collect();
        let large: Vec<usize> = (0..5).filter(|j| (s | extra) >> j & 1 == 1).collect();
        prop_assert!(game.value(&small) <= game.value(&large));
        prop_assert_eq!(game.value(&[]), 0.0);
    }

    #[test]
    fn duplicating_a_player_keeps_full_value(rows in scaled_rows(4), j in 0usize..4) {
        let game = CoalitionGame::from_scores(names(4), &rows);
        let twin: Vec<Vec<f64>> = rows.iter().map(|r| { let mut r = r.clone(); r.push(r[j]); r }).collect();
        let bigger = CoalitionGame::from_scores(names(5), &twin);
        prop_assert_eq!(bigger.full_value(), game.full_value());
    }

    #[test]
    fn zero_column_is_a_null_player(rows in scaled_rows(4)) {
        let with_zero: Vec<Vec<f64>> = rows.iter().map(|r| { let mut r = r.clone(); r.push(0.0); r }).collect();
        let game = CoalitionGame::from_scores(names(5), &with_zero);
        let report = shapley_values(&game, ShapleyMethod::Exact).unwrap();
        prop_assert_eq!(report.shapley()[4], 0.0);
        let total: f64 = report.shapley().iter().sum();
        prop_assert!((total - game.full_value()).abs() <= 1e-9);
    }
}

fn toy_dataset(seed: u64, a: usize) -> Dataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| {
            (0..a)
                .map(|j| ((r[j % 3] * (j + 1) as f64).sin() + 1.0) / 2.0)
                .collect()
        })
        .collect();
    Dataset {
        instances: (0..n).map(|i| format!("i{i}")).collect(),
        feature_names: vec!["f0".into(), "f1".into(), "f2".into()],
        x,
        algorithms: names(a),
        y,
        folds: (0..n).map(|i| i % 4 + 1).collect(),
        k: 4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn pairwise_votes_cover_every_pair(seed in any::<u64>(), a in 2usize..6, q in prop::collection::vec(0.0f64..1.0, 3)) {
        let data = toy_dataset(seed, a);
        let cfg = SelectorConfig { n_trees: 10, knn_k: 5, ..SelectorConfig::with_seed(seed) };
        let sel = train_selector(Family::PairwiseRF, &data, None, &cfg).unwrap();
        let votes = sel.votes(&q).unwrap();
        prop_assert_eq!(votes.iter().sum::<usize>(), a * (a - 1) / 2);
        for family in Family::ALL {
            let sel = train_selector(family, &data, Some(1), &cfg).unwrap();
            prop_assert_eq!(sel.select(&q), train_selector(family, &data, Some(1), &cfg).unwrap().select(&q));
        }
    }
}

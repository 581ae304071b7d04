mod common;

use std::time::Duration;

use common::{brute_force_cost, non_goal_states, random_forest, random_library, random_sas, rng, ForestShape};
use forestplan::baselines::{greedy_plan, oracle_plan, GreedyRule, DEFAULT_ORACLE_CAP};
use forestplan::encoder::{
    build_sas, decode, encode, plan, solve_sas, validate_plan, Online, Plan, PlanError, PlanParams, SasProblem,
};
use forestplan::fixtures::example_forest;
use forestplan::forest::{Tree, TreeNode};
use forestplan::knn::SimilarityWeights;
use forestplan::maxsat::{read_wcnf, solve, write_wcnf, SolveOptions, SolveStatus, WcnfInstance};
use forestplan::offline::{preprocess, Alpha, SearchParams};
use forestplan::sas::{ActionLibrary, CostModel};
use forestplan::{FeatureMeta, Mutability, PartitionTable, RandomForest, State};
use proptest::prelude::*;

fn st(v: &[usize]) -> State {
    State(v.to_vec())
}

#[test]
fn random_pipeline_plans_validate() {
    let mut r = rng(31);
    let mut solved = 0;
    for _ in 0..200 {
        let sas = random_sas(&mut r);
        for l in 1..=3 {
            let enc = encode(&sas, l).unwrap();
            let res = solve(&enc.wcnf, SolveOptions::default());
            if res.status == SolveStatus::Optimal {
                let p = decode(res.model.as_ref().unwrap(), &enc.vars, &sas);
                validate_plan(&p, &sas).unwrap();
                assert_eq!(p.weight(&sas), res.cost.unwrap());
                assert!(p.makespan() <= l);
                solved += 1;
            }
        }
    }
    assert!(solved > 100);
}

#[test]
fn dropping_an_action_breaks_a_plan() {
    let mut r = rng(32);
    let mut mutated = 0;
    for _ in 0..200 {
        let sas = random_sas(&mut r);
        let Ok((p, _)) = solve_sas(&sas, &PlanParams::default()) else { continue };
        if p.action_count() == 0 {
            continue;
        }
        for (i, step) in p.steps.iter().enumerate() {
            for k in 0..step.len() {
                let mut steps = p.steps.clone();
                steps[i].remove(k);
                let broken = Plan {
                    steps,
                    cost: p.cost,
                    reached: p.reached.clone(),
                };
                assert!(validate_plan(&broken, &sas).is_err());
                mutated += 1;
            }
        }
    }
    assert!(mutated > 0);
}

#[test]
fn empty_plan_validates_iff_initial_is_goal() {
    let mut r = rng(33);
    for _ in 0..200 {
        let sas = random_sas(&mut r);
        let ok = validate_plan(&Plan::empty(&sas.initial), &sas).is_ok();
        assert_eq!(ok, sas.goals.contains(&sas.initial));
    }
}

#[test]
fn wcnf_round_trip_preserves_optimum() {
    let mut r = rng(34);
    for _ in 0..50 {
        let sas = random_sas(&mut r);
        let enc = encode(&sas, 2).unwrap();
        let mut buf = Vec::new();
        write_wcnf(&enc.wcnf, &mut buf).unwrap();
        let back = read_wcnf(buf.as_slice()).unwrap();
        assert_eq!(back.num_vars(), enc.wcnf.num_vars());
        assert_eq!(back.hard(), enc.wcnf.hard());
        assert_eq!(back.soft(), enc.wcnf.soft());
        let (a, b) = (solve(&enc.wcnf, SolveOptions::default()), solve(&back, SolveOptions::default()));
        assert_eq!((a.status, a.cost), (b.status, b.cost));
    }
}

#[test]
fn sweep_never_costs_more_than_first_feasible() {
    let mut r = rng(35);
    for _ in 0..100 {
        let sas = random_sas(&mut r);
        let first = solve_sas(&sas, &PlanParams { max_makespan: 3, ..PlanParams::default() });
        let sweep = solve_sas(&sas, &PlanParams { max_makespan: 3, sweep: true, ..PlanParams::default() });
        match (first, sweep) {
            (Ok((a, la)), Ok((b, lb))) => {
                assert!(b.cost <= a.cost);
                assert!(la <= lb || b.cost < a.cost);
                let best = brute_force_cost(&sas, 3).unwrap();
                assert_eq!(b.weight(&sas), best * 1000);
            }
            (Err(PlanError::Unsolvable(_)), Err(PlanError::Unsolvable(_))) => {
                assert_eq!(brute_force_cost(&sas, 3), None);
            }
            (a, b) => panic!("first {a:?}, sweep {b:?}"),
        }
    }
}

#[test]
fn zero_timeout_reports_timeout() {
    let sas = random_sas(&mut rng(36));
    let params = PlanParams {
        timeout: Some(Duration::ZERO),
        ..PlanParams::default()
    };
    if !sas.goals.contains(&sas.initial) {
        assert!(matches!(solve_sas(&sas, &params), Err(PlanError::Timeout { .. })));
    }
}

fn example_context() -> (RandomForest, PartitionTable, ActionLibrary, SearchParams) {
    let (forest, table) = example_forest();
    let lib = ActionLibrary::default_library(&table, forest.features(), &CostModel::unit(3));
    let search = SearchParams::new(1, 0.5, Alpha::Auto.resolve(&lib));
    (forest, table, lib, search)
}

#[test]
fn example_online_plan_is_optimal() {
    let (forest, table, lib, search) = example_context();
    let states = vec![st(&[0, 0, 0]), st(&[0, 1, 0]), st(&[0, 1, 1])];
    let db = preprocess(&states, &lib, &forest, &table, &search, 1).unwrap();
    let weights = SimilarityWeights::new(vec![1.0 / 3.0; 3]).unwrap();
    let ctx = Online {
        forest: &forest,
        table: &table,
        lib: &lib,
        db: Some(&db),
        weights: &weights,
        search: &search,
    };
    let start = st(&[0, 0, 1]);
    let oracle = oracle_plan(&start, &lib, &forest, &table, &search, DEFAULT_ORACLE_CAP)
        .unwrap()
        .unwrap();
    let params = PlanParams { k: 2, ..PlanParams::default() };
    let out = plan(&ctx, &start, &params).unwrap();
    assert_eq!(out.plan.cost, oracle.cost);
    assert_eq!(out.goals, vec![st(&[0, 1, 2])]);

    // With K=1 a stored query uses its own preferred goal.
    let (sas, _) = build_sas(&ctx, &st(&[0, 1, 0]), 1).unwrap();
    assert_eq!(sas.goals, vec![db.get(&st(&[0, 1, 0])).unwrap().goal.clone().unwrap()]);

    let greedy = greedy_plan(&st(&[0, 0, 0]), &lib, &forest, &table, &search, GreedyRule::Ratio).unwrap();
    let planned = plan(&ctx, &st(&[0, 0, 0]), &PlanParams { sweep: true, ..params }).unwrap();
    assert!(planned.plan.cost <= greedy.cost);
}

#[test]
fn planner_crosses_plateaus_that_stop_greedy() {
    // Two trees that each need both features raised to vote for the target.
    let features = vec![
        FeatureMeta::numerical("a", Mutability::Soft),
        FeatureMeta::numerical("b", Mutability::Soft),
    ];
    let both = || {
        Tree::from_root(TreeNode::below(
            0,
            1.0,
            TreeNode::leaf(0),
            TreeNode::below(1, 1.0, TreeNode::leaf(0), TreeNode::leaf(1)),
        ))
    };
    let forest = RandomForest::new(features, vec!["0".into(), "1".into()], vec![(1.0, both()), (1.0, both())]).unwrap();
    let table = PartitionTable::build(&forest);
    let lib = ActionLibrary::default_library(&table, forest.features(), &CostModel::unit(2));
    let search = SearchParams::new(1, 0.5, 1.0);
    let start = st(&[0, 0]);
    assert!(greedy_plan(&start, &lib, &forest, &table, &search, GreedyRule::Ratio).is_err());
    let weights = SimilarityWeights::uniform(2);
    let ctx = Online {
        forest: &forest,
        table: &table,
        lib: &lib,
        db: None,
        weights: &weights,
        search: &search,
    };
    let out = plan(&ctx, &start, &PlanParams::default()).unwrap();
    assert_eq!(out.plan.reached, st(&[1, 1]));
    assert_eq!(out.plan.cost, 2.0);
}

#[test]
fn oracle_bounds_both_planners() {
    let mut r = rng(37);
    let mut compared = 0;
    for _ in 0..30 {
        let forest = random_forest(&mut r, ForestShape { max_features: 4, ..ForestShape::default() });
        let table = PartitionTable::build(&forest);
        let lib = random_library(&forest, &table, &mut r);
        let search = SearchParams::new(1, 0.5, Alpha::Auto.resolve(&lib));
        let states = non_goal_states(&forest, &table, 1, 0.5);
        let db = preprocess(&states, &lib, &forest, &table, &search, 1).unwrap();
        let weights = SimilarityWeights::from_split_frequency(&forest);
        let ctx = Online {
            forest: &forest,
            table: &table,
            lib: &lib,
            db: Some(&db),
            weights: &weights,
            search: &search,
        };
        for s in states.iter().take(5) {
            let Some(o) = oracle_plan(s, &lib, &forest, &table, &search, DEFAULT_ORACLE_CAP).unwrap() else {
                continue;
            };
            if let Ok(g) = greedy_plan(s, &lib, &forest, &table, &search, GreedyRule::Ratio) {
                assert!(o.cost <= g.cost + 1e-9);
                let sas = SasProblem::new(table.counts(), lib.actions().to_vec(), s.clone(), vec![g.reached.clone()]).unwrap();
                validate_plan(&g.to_plan(&sas), &sas).unwrap();
            }
            if let Ok(p) = plan(&ctx, s, &PlanParams::default()) {
                assert!(o.cost <= p.plan.cost + 1e-9);
                compared += 1;
            }
        }
    }
    assert!(compared > 0);
}

fn clause() -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec((1i32..=8, any::<bool>()).prop_map(|(v, neg)| if neg { -v } else { v }), 1..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn solver_matches_enumeration(
        hard in prop::collection::vec(clause(), 0..12),
        soft in prop::collection::vec((1u64..30, clause()), 1..16),
    ) {
        let mut w = WcnfInstance::new(8);
        for c in hard {
            w.add_hard(c).unwrap();
        }
        for (weight, c) in soft {
            w.add_soft(weight, c).unwrap();
        }
        let mut best: Option<u64> = None;
        for bits in 0u32..256 {
            let m: Vec<bool> = (0..8).map(|i| bits >> i & 1 == 1).collect();
            if w.satisfies_hard(&m) {
                let c = w.cost(&m);
                best = Some(best.map_or(c, |b| b.min(c)));
            }
        }
        let res = solve(&w, SolveOptions::default());
        match best {
            None => prop_assert_eq!(res.status, SolveStatus::HardUnsat),
            Some(c) => {
                prop_assert_eq!(res.status, SolveStatus::Optimal);
                prop_assert_eq!(res.cost, Some(c));
                let m = res.model.unwrap();
                prop_assert!(w.satisfies_hard(&m));
                prop_assert_eq!(w.cost(&m), c);
            }
        }
    }

    #[test]
    fn encoding_agrees_with_brute_force(seed in any::<u64>(), l in 1usize..=3) {
        let sas = random_sas(&mut rng(seed));
        let enc = encode(&sas, l).unwrap();
        prop_assert_eq!(enc.wcnf.soft().len(), sas.actions.len() * l);
        let res = solve(&enc.wcnf, SolveOptions::default());
        match brute_force_cost(&sas, l) {
            None => prop_assert_eq!(res.status, SolveStatus::HardUnsat),
            Some(c) => prop_assert_eq!(res.cost, Some(c * 1000)),
        }
    }

    #[test]
    fn optimum_is_monotone_in_makespan(seed in any::<u64>()) {
        let sas = random_sas(&mut rng(seed));
        let mut prev: Option<u64> = None;
        for l in 1..=3 {
            let res = solve(&encode(&sas, l).unwrap().wcnf, SolveOptions::default());
            if let Some(p) = prev {
                prop_assert!(res.cost.is_some_and(|c| c <= p));
            }
            if res.cost.is_some() {
                prev = res.cost;
            }
        }
    }
}

mod common;

use std::collections::HashMap;

use nrr_core::bench::ausc;
use nrr_core::construct::{best_insertion, savings_init, sweep_init};
use nrr_core::io::{parse_vrp, write_vrp, Trajectory};
use nrr_core::recreate::{recreate_savings, InsertionRecreate, Recreate};
use nrr_core::scoring::{select_disjoint, softmax};
use nrr_core::sg::{
    construct_add_nn, construct_knn, construct_sweep, insert, insert_many, ruin, SgKey, SizeTarget, SubGraph,
    SweepParams,
};
use nrr_core::{validate, Instance, Point, Rounding, Solution};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_instance(max_n: usize) -> impl Strategy<Value = Instance> {
    (1..=max_n, any::<u64>(), any::<bool>()).prop_map(|(n, seed, round)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_instance(&mut rng, n, round)
    })
}

fn sorted(mut routes: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    routes.sort();
    routes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn initial_solutions_are_feasible(inst in arb_instance(60)) {
        for s in [savings_init(&inst), sweep_init(&inst)] {
            prop_assert!(validate(&inst, &s).is_empty());
        }
        let all: Vec<usize> = (1..=inst.len()).collect();
        prop_assert!(validate(&inst, &best_insertion(&inst, &Solution::empty(), &all)).is_empty());
    }

    #[test]
    fn sweep_family_partitions_tours(inst in arb_instance(80), nt in 1usize..30) {
        let s = savings_init(&inst);
        let fam = construct_sweep(&inst, &s, SweepParams::new(nt));
        let mut seen = vec![0; s.num_tours()];
        let mut nodes = Vec::new();
        for g in &fam {
            for &t in &g.tours { seen[t] += 1; }
            nodes.extend_from_slice(&g.nodes);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        nodes.sort_unstable();
        prop_assert_eq!(nodes, (1..=inst.len()).collect::<Vec<_>>());
    }

    #[test]
    fn every_family_member_covers_whole_tours(inst in arb_instance(60), k in 0usize..4, nt in 1usize..25) {
        let s = sweep_init(&inst);
        let fams = [
            construct_knn(&inst, &s, k),
            construct_add_nn(&inst, &s, SizeTarget::new(nt)),
            construct_sweep(&inst, &s, SweepParams { restarts: 3, ..SweepParams::new(nt) }),
        ];
        for fam in &fams {
            let mut keys: Vec<SgKey> = fam.iter().map(|g| g.key).collect();
            keys.sort();
            keys.dedup();
            prop_assert_eq!(keys.len(), fam.len());
            for g in fam {
                let mut expect: Vec<usize> = g.tours.iter().flat_map(|&t| s.tours()[t].nodes.clone()).collect();
                expect.sort_unstable();
                prop_assert_eq!(&expect, &g.nodes);
            }
        }
    }

    #[test]
    fn key_ignores_tour_enumeration_order(inst in arb_instance(60), seed: u64) {
        let s = savings_init(&inst);
        let mut tours: Vec<usize> = (0..s.num_tours()).collect();
        let g = SubGraph::from_tours(&inst, &s, &tours);
        tours.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let h = SubGraph::from_tours(&inst, &s, &tours);
        prop_assert_eq!(g.key, h.key);
        prop_assert_eq!(&g.nodes, &h.nodes);
        prop_assert_eq!(g.key, SgKey::of_nodes(&(1..=inst.len()).collect::<Vec<_>>()));
    }

    #[test]
    fn ruin_then_reinsert_prior_is_identity(inst in arb_instance(60), nt in 1usize..20) {
        let s = savings_init(&inst);
        for g in construct_add_nn(&inst, &s, SizeTarget::new(nt)) {
            let rsg = ruin(&inst, &s, &g).unwrap();
            let prior = rsg.prior_solution(&s);
            prop_assert!((prior.cost() - rsg.prior_cost).abs() < 1e-9);
            let back = insert(&inst, &s, &rsg, &prior).unwrap();
            prop_assert_eq!(sorted(back.routes()), sorted(s.routes()));
            prop_assert!((back.cost() - s.cost()).abs() < 1e-9);
        }
    }

    #[test]
    fn recreated_sub_solutions_insert_feasibly(inst in arb_instance(60), seed: u64) {
        let s = savings_init(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = InsertionRecreate { restarts: 4 };
        for g in construct_knn(&inst, &s, 2) {
            let rsg = ruin(&inst, &s, &g).unwrap();
            for sub in [recreate_savings(&rsg), op.recreate(&rsg, &mut rng, None).unwrap()] {
                prop_assert!(validate(&rsg.instance, &sub).is_empty());
                let next = insert(&inst, &s, &rsg, &sub).unwrap();
                prop_assert!(validate(&inst, &next).is_empty());
                let expect = s.cost() - rsg.prior_cost + sub.cost();
                prop_assert!((next.cost() - expect).abs() < 1e-9 * (1.0 + s.cost()));
            }
        }
    }

    #[test]
    fn disjoint_inserts_commute(inst in arb_instance(80), nt in 1usize..15) {
        let s = sweep_init(&inst);
        let fam = construct_sweep(&inst, &s, SweepParams::new(nt));
        prop_assume!(fam.len() >= 2);
        let a = ruin(&inst, &s, &fam[0]).unwrap();
        let b = ruin(&inst, &s, &fam[fam.len() - 1]).unwrap();
        let sa = recreate_savings(&a);
        let sb = recreate_savings(&b);
        let ab = insert_many(&inst, &s, &[(&a, &sa), (&b, &sb)]).unwrap();
        let ba = insert_many(&inst, &s, &[(&b, &sb), (&a, &sa)]).unwrap();
        prop_assert_eq!(sorted(ab.routes()), sorted(ba.routes()));
        prop_assert!((ab.cost() - ba.cost()).abs() < 1e-9);
        prop_assert!(insert_many(&inst, &s, &[(&a, &sa), (&a, &sa)]).is_err());
    }

    #[test]
    fn ausc_in_unit_interval_and_antitone(
        costs in prop::collection::vec(50.0f64..150.0, 1..12),
        bump in 0.0f64..40.0,
        idx in 0usize..12,
        horizon in 1.0f64..20.0,
    ) {
        // nonincreasing best-so-far
        let mut best = f64::INFINITY;
        let mut pairs = Vec::new();
        for (k, c) in costs.iter().enumerate() {
            best = best.min(*c);
            pairs.push((k as f64, best));
        }
        let t = Trajectory::from_pairs(&pairs);
        let v = ausc(&t, 100.0, horizon).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let mut raised = pairs.clone();
        let i = idx % raised.len();
        raised[i].1 += bump;
        let w = ausc(&Trajectory::from_pairs(&raised), 100.0, horizon).unwrap();
        prop_assert!(w <= v + 1e-12);
    }

    #[test]
    fn vrp_text_round_trips(inst in arb_instance(40)) {
        let again = parse_vrp(&write_vrp(&inst)).unwrap();
        prop_assert_eq!(again.len(), inst.len());
        prop_assert_eq!(again.capacity(), inst.capacity());
        prop_assert_eq!(again.demands(), inst.demands());
        prop_assert_eq!(again.rounding(), inst.rounding());
        for v in 0..=inst.len() {
            prop_assert_eq!(again.coord(v), inst.coord(v));
        }
    }

    #[test]
    fn softmax_is_a_distribution(vals in prop::collection::vec(-1e3f64..1e3, 1..30), temp in 0.01f64..10.0) {
        let p = softmax(&vals, temp);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn disjoint_selection_is_pairwise_disjoint(inst in arb_instance(60), k in 1usize..8, seed: u64) {
        let s = savings_init(&inst);
        let fam = construct_knn(&inst, &s, 2);
        let scores: HashMap<SgKey, f64> = fam.iter().map(|g| (g.key, g.nodes.len() as f64)).collect();
        let picked = select_disjoint(&fam, &scores, k, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(!picked.is_empty() && picked.len() <= k);
        for (i, &a) in picked.iter().enumerate() {
            for &b in &picked[i + 1..] {
                prop_assert!(!fam[a].shares_tour_with(&fam[b]));
            }
        }
    }
}

#[test]
fn validate_reports_each_violation_kind() {
    let inst = Instance::new(
        "v",
        Point::new(0.0, 0.0),
        vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0)],
        vec![2.0, 2.0, 2.0],
        4.0,
        Rounding::None,
    )
    .unwrap();
    let over = Solution::from_routes(&inst, vec![vec![1, 2, 3]]);
    let dup = Solution::from_routes(&inst, vec![vec![1, 2], vec![2], vec![3]]);
    let missing = Solution::from_routes(&inst, vec![vec![1, 2]]);
    let bad = Solution::from_routes(&inst, vec![vec![1, 2], vec![3, 9]]);
    for s in [&over, &dup, &missing, &bad] {
        assert!(!validate(&inst, s).is_empty());
    }
    let ok = Solution::from_routes(&inst, vec![vec![1, 2], vec![3]]);
    assert!(validate(&inst, &ok).is_empty());
}

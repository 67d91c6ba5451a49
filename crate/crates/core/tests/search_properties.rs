use mec_ibnb::bnb::{solve_bnb, BnbOptions, NodeAction, SolveStatus};
use mec_ibnb::relax::{solve_relaxation, solve_split, NodeConstraints};
use mec_ibnb::scenario::{Assignment, Scenario, ScenarioConfig, Weights};
use proptest::prelude::*;
use std::collections::HashMap;

fn frame(s: usize, k: usize, seed: u64) -> Scenario {
    Scenario::generate(&ScenarioConfig::default().with_shape(s, k).with_seed(seed)).unwrap()
}

fn shapes() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..4).prop_flat_map(|s| (Just(s), s..6, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_weights_scales_the_optimum((s, k, seed) in shapes(), c in 0.1f64..20.0) {
        let sc = frame(s, k, seed);
        let scaled = sc.with_weights(sc.weights().scaled(c)).unwrap();
        let a = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        let b = solve_bnb(&scaled, &BnbOptions::default()).unwrap();
        let (pa, pb) = (a.psi().unwrap(), b.psi().unwrap());
        prop_assert!((pb - c * pa).abs() <= 1e-7 * c * pa, "{} vs {}", pb, c * pa);
    }

    #[test]
    fn energy_is_order_independent((s, k, seed) in shapes()) {
        let sc = frame(s, k, seed);
        let r = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        let a = r.best.unwrap().assignment;
        let mut md_first = 0.0;
        for s_i in 0..s {
            for k_i in 0..k {
                let i = sc.index(s_i, k_i);
                if a.x[i] {
                    md_first += sc.power(s_i) * a.l[i] / sc.rate(s_i, k_i);
                }
            }
        }
        prop_assert!((sc.energy(&a) - md_first).abs() <= 1e-12 * md_first.max(1e-300));
    }

    #[test]
    fn children_never_bound_below_parents((s, k, seed) in shapes()) {
        let sc = frame(s, k, seed);
        let r = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        let psi: HashMap<usize, f64> = r.trace.iter().filter_map(|n| n.psi().map(|p| (n.id, p))).collect();
        for n in &r.trace {
            if let (Some(p), Some(parent)) = (n.psi(), n.parent) {
                prop_assert!(p >= psi[&parent] * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn incumbent_only_improves((s, k, seed) in shapes()) {
        let sc = frame(s, k, seed);
        let r = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        for w in r.trace.windows(2) {
            prop_assert!(w[1].zub_at_pop <= w[0].zub_at_pop);
        }
        if let Some(best) = &r.best {
            prop_assert!(r.trace.iter().all(|n| n.zub_at_pop >= best.psi));
        }
    }

    #[test]
    fn trace_is_a_complete_tree((s, k, seed) in shapes()) {
        let sc = frame(s, k, seed);
        let r = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        prop_assert_eq!(r.nodes_searched, r.trace.len());
        prop_assert_eq!(r.trace[0].id, 0);
        let mut seen = HashMap::new();
        for n in &r.trace {
            prop_assert!(seen.insert(n.id, n.action).is_none());
            if let Some(p) = n.parent {
                prop_assert_eq!(seen.get(&p), Some(&NodeAction::Branched));
            }
        }
        let branched = r.trace.iter().filter(|n| n.action == NodeAction::Branched).count();
        prop_assert_eq!(r.trace.len(), 1 + 2 * branched);
    }

    #[test]
    fn solving_is_deterministic((s, k, seed) in shapes()) {
        let sc = frame(s, k, seed);
        let a = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        let b = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        prop_assert_eq!(a.trace_csv(sc.num_pairs()), b.trace_csv(sc.num_pairs()));
    }

    #[test]
    fn incumbent_is_feasible_and_matches_its_objective((s, k, seed) in shapes()) {
        let sc = frame(s, k, seed);
        let r = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let b = r.best.unwrap();
        prop_assert!(sc.check_feasible(&b.assignment, 1e-7).is_empty());
        let obj = sc.objective(&b.assignment);
        prop_assert!((obj - b.psi).abs() <= 1e-7 * obj);
    }

    #[test]
    fn split_matches_latency_water_filling((s, k, seed) in shapes(), extra in any::<u64>()) {
        // Latency only: each MD spreads so its channels finish together, and
        // the frame waits for the slowest MD.
        let sc = frame(s, k, seed).with_weights(Weights { lambda_t: 1.0, lambda_e: 0.0 }).unwrap();
        let x = private_channels(s, k, extra);
        let split = solve_split(&sc, &x).unwrap().unwrap();
        let expected = (0..s)
            .map(|m| {
                let r: f64 = (0..k).filter(|&c| x[m * k + c]).map(|c| sc.rate(m, c)).sum();
                sc.task_bits(m) / r
            })
            .fold(0.0, f64::max);
        prop_assert!((split.psi - expected).abs() <= 1e-8 * expected);
    }

    #[test]
    fn split_matches_best_channel_for_energy((s, k, seed) in shapes(), extra in any::<u64>()) {
        // Energy only: each MD sends everything on its fastest channel.
        let sc = frame(s, k, seed).with_weights(Weights { lambda_t: 0.0, lambda_e: 1.0 }).unwrap();
        let x = private_channels(s, k, extra);
        let split = solve_split(&sc, &x).unwrap().unwrap();
        let expected: f64 = (0..s)
            .map(|m| {
                let r = (0..k).filter(|&c| x[m * k + c]).map(|c| sc.rate(m, c)).fold(0.0, f64::max);
                sc.power(m) * sc.task_bits(m) / r
            })
            .sum();
        prop_assert!((split.psi - expected).abs() <= 1e-8 * expected);
        let a = Assignment { x: x.clone(), l: split.l.clone() };
        prop_assert!((sc.energy(&a) - expected).abs() <= 1e-8 * expected);
    }

    #[test]
    fn fixed_relaxation_equals_split((s, k, seed) in shapes(), extra in any::<u64>()) {
        let sc = frame(s, k, seed);
        let x = private_channels(s, k, extra);
        let relax = solve_relaxation(&sc, &NodeConstraints::from_binary(&x)).unwrap().unwrap();
        let split = solve_split(&sc, &x).unwrap().unwrap();
        prop_assert!((relax.psi - split.psi).abs() <= 1e-8 * split.psi);
        prop_assert!(relax.integral);
    }
}

/// Channel `m` goes to MD `m`; leftover channels are dealt out by `bits`.
fn private_channels(s: usize, k: usize, bits: u64) -> Vec<bool> {
    let mut x = vec![false; s * k];
    for c in 0..k {
        let owner = if c < s { Some(c) } else { ((bits >> (3 * c)) % (s as u64 + 1)).try_into().ok().filter(|&o: &usize| o < s) };
        if let Some(m) = owner {
            x[m * k + c] = true;
        }
    }
    x
}

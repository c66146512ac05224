use filtration_core::calculus::{
    bracket, check_martingale, decompose, dot_integral, is_martingale, JumpMeasure, Process,
};
use filtration_core::enlargement::drift_operator;
use filtration_core::random::{self, TreeParams};
use filtration_core::rational::{int, ratio};
use filtration_core::representation::{check_mrp, representation_coefficient};
use filtration_core::scenario::Scenario;
use filtration_core::tree::{Enlargement, FilteredTree};
use filtration_core::{fuzz, Q};
use num_traits::Zero;
use proptest::prelude::*;
use rand::Rng;

fn tree(seed: u64) -> FilteredTree {
    random::random_tree(seed, TreeParams { max_branching: 3, horizon: 3, denom_bound: 5 })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tower_property(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let x: Vec<Q> = (0..tree.n_leaves()).map(|_| ratio(rng.gen_range(-9..=9), rng.gen_range(1..=4))).collect();
        let mut rng2 = random::rng(seed ^ 1);
        for filt in [tree.base().clone(), random::random_enlargement(&tree, &mut rng2, 2).filtration().clone()] {
            for t in 0..=tree.horizon() {
                let inner = tree.project(&x, filt.at(t));
                for s in 0..=t {
                    prop_assert_eq!(tree.project(&inner, filt.at(s)), tree.project(&x, filt.at(s)));
                }
                // per-atom form agrees with the leafwise projection
                let per_atom = tree.conditional_expectation(&x, t, &filt).unwrap();
                for (a, leaves) in filt.at(t).atoms().iter().enumerate() {
                    prop_assert_eq!(&per_atom[a], &inner[leaves[0]]);
                }
            }
        }
    }

    #[test]
    fn integrals_of_martingales_are_martingales(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let m = random::random_martingale(&tree, &mut rng, 2);
        prop_assert!(is_martingale(&tree, &m, tree.base()));
        let h = random::random_predictable(&tree, &mut rng, 2, tree.base());
        let integral = dot_integral(&tree, &h, &m, tree.base()).unwrap();
        prop_assert!(check_martingale(&tree, &integral, tree.base()).is_ok());
    }

    #[test]
    fn doob_decomposition_reassembles(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let m = random::random_martingale(&tree, &mut rng, 1);
        // a square is a submartingale with nontrivial drift
        let x = Process::from_fn(&tree, 1, |t, l| vec![m.scalar(t, l) * m.scalar(t, l)]);
        let d = decompose(&tree, &x, tree.base());
        prop_assert!(is_martingale(&tree, &d.martingale_part, tree.base()));
        prop_assert!(d.drift_part.check_predictable(tree.base()).is_ok());
        prop_assert_eq!(d.martingale_part.add(&d.drift_part).unwrap(), x);
    }

    #[test]
    fn bracket_is_symmetric_and_square_is_increasing(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let x = random::random_martingale(&tree, &mut rng, 1);
        let y = random::random_martingale(&tree, &mut rng, 1);
        prop_assert_eq!(bracket(&tree, &x, &y).unwrap(), bracket(&tree, &y, &x).unwrap());
        let xx = bracket(&tree, &x, &x).unwrap();
        for t in 1..=tree.horizon() {
            for inc in xx.increments(t) {
                prop_assert!(inc[0] >= Q::zero());
            }
        }
    }

    #[test]
    fn representation_round_trip(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let d = random::max_children(&tree).saturating_sub(1).max(1);
        let w = random::random_mrp_basis(&tree, &mut rng, d);
        prop_assert!(check_mrp(&tree, &w).unwrap().holds);
        let x = random::random_martingale(&tree, &mut rng, 1);
        let h = representation_coefficient(&tree, &x, &w).unwrap();
        prop_assert_eq!(dot_integral(&tree, &h, &w, tree.base()).unwrap(), x.centered());
    }

    #[test]
    fn drift_is_linear_and_vanishes_without_information(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let g = random::random_enlargement(&tree, &mut rng, 3);
        let x = random::random_martingale(&tree, &mut rng, 1);
        let z = random::random_martingale(&tree, &mut rng, 1);
        let (a, b) = (ratio(3, 2), int(-2));
        let combo = x.scale(&a).add(&z.scale(&b)).unwrap();
        let lhs = drift_operator(&tree, &combo, &g).unwrap().drift;
        let rhs = drift_operator(&tree, &x, &g).unwrap().drift.scale(&a)
            .add(&drift_operator(&tree, &z, &g).unwrap().drift.scale(&b)).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert!(drift_operator(&tree, &x, &Enlargement::trivial(&tree)).unwrap().drift.is_zero());
    }

    #[test]
    fn jump_measure_charges_exactly_the_jumps(seed in any::<u64>()) {
        let tree = tree(seed);
        let mut rng = random::rng(seed);
        let x = random::random_martingale(&tree, &mut rng, 2);
        let mu = JumpMeasure::from_process(&x);
        for t in 1..=tree.horizon() {
            for leaf in 0..tree.n_leaves() {
                let inc = x.increment(t, leaf);
                let charged = mu.beta(t, leaf);
                prop_assert_eq!(charged.is_some(), inc.iter().any(|v| !v.is_zero()));
            }
        }
    }

    #[test]
    fn fuzzed_scenarios_round_trip_through_json(seed in 0u64..500) {
        let scenario = fuzz::instance(seed, &fuzz::FuzzParams::default());
        let parsed = Scenario::from_json(&scenario.to_json()).unwrap();
        prop_assert_eq!(&parsed, &scenario);
        prop_assert!(parsed.load().is_ok());
    }
}

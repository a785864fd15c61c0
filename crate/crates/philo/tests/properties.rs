//! Property tests over randomly generated valuations, instances, and
//! stopping problems.

use philo::config_lp::{build_and_solve, tighten};
use philo::instance::{gen_random_submodular, Instance, ALL_SUBMODULAR_KINDS};
use philo::items::ItemSet;
use philo::prophet::{optimal_thresholds, PiInstance, PiPoint, PiPolicy};
use philo::valuations::{SetFunction, Valuation, ValuationKind};
use proptest::prelude::*;

fn arb_valuation() -> impl Strategy<Value = Valuation> {
    let m = 1usize..=6;
    m.prop_flat_map(|m| {
        let weights = proptest::collection::vec(0.0f64..5.0, m);
        prop_oneof![
            weights.clone().prop_map(move |w| Valuation::new(
                m,
                ValuationKind::Additive { weights: w }
            )
            .unwrap()),
            weights.clone().prop_map(move |w| Valuation::new(
                m,
                ValuationKind::UnitDemand { weights: w }
            )
            .unwrap()),
            (weights.clone(), 0.0f64..6.0).prop_map(move |(w, cap)| Valuation::new(
                m,
                ValuationKind::BudgetAdditive { weights: w, cap }
            )
            .unwrap()),
            proptest::collection::vec(weights, 1..4).prop_map(move |clauses| Valuation::new(
                m,
                ValuationKind::XosExplicit { clauses }
            )
            .unwrap()),
        ]
    })
}

proptest! {
    /// Prefix marginals telescope to the set value for every kind.
    #[test]
    fn marginals_telescope(v in arb_valuation(), mask in any::<u64>()) {
        let m = v.m();
        let set = ItemSet::from_mask(mask & ItemSet::full(m).mask());
        let sum: f64 = (0..m).map(|i| v.prefix_marginal(set, i)).sum();
        prop_assert!((sum - v.value(set)).abs() <= 1e-9);
    }

    /// Monotone in the set, zero on the empty set.
    #[test]
    fn values_are_monotone(v in arb_valuation(), mask in any::<u64>(), extra in 0usize..6) {
        let m = v.m();
        let set = ItemSet::from_mask(mask & ItemSet::full(m).mask());
        prop_assert_eq!(v.value(ItemSet::EMPTY), 0.0);
        let bigger = set.with(extra % m);
        prop_assert!(v.value(bigger) >= v.value(set) - 1e-9);
    }

    /// Instance JSON round-trips byte-identically.
    #[test]
    fn instance_round_trip(m in 1usize..=5, t in 1usize..=4, k in 1usize..=3, seed in any::<u64>()) {
        let inst = gen_random_submodular(m, t, k, seed, &ALL_SUBMODULAR_KINDS).unwrap();
        let once = inst.to_json().unwrap();
        let back = Instance::from_json(&once).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), once);
    }

    /// No fixed threshold beats the backward recursion.
    #[test]
    fn threshold_policies_stay_under_opt(
        probs in proptest::collection::vec(0.0f64..0.2, 1..6),
        values in proptest::collection::vec(0.0f64..10.0, 1..6),
        cut in 0.0f64..10.0,
    ) {
        let steps: Vec<Vec<PiPoint>> = probs
            .iter()
            .zip(&values)
            .map(|(&prob, &value)| vec![PiPoint { value, prob }])
            .collect();
        let pi = PiInstance::new(steps).unwrap();
        let (_, opt) = optimal_thresholds(&pi);
        let fixed = PiPolicy::FixedThreshold { threshold: cut }.value(&pi);
        prop_assert!(fixed <= opt + 1e-9);
        prop_assert!(opt >= 0.5 * pi.benchmark() - 1e-9);
    }

    /// The per-item stopping benchmarks of a tight solution sum to the LP
    /// objective and match the per-item shares exactly.
    #[test]
    fn bundle_benchmarks_match_lp_shares(seed in any::<u64>()) {
        let inst = gen_random_submodular(4, 3, 2, seed, &ALL_SUBMODULAR_KINDS).unwrap();
        let sol = build_and_solve(&inst).unwrap();
        let (sol, inst) = tighten(&sol, &inst);
        let bundle = philo::baseline::build_bundle(&inst, &sol).unwrap();
        for i in 0..inst.m {
            prop_assert!((bundle.pis[i].benchmark() - sol.per_item[i]).abs() <= 1e-9);
        }
        let total: f64 = (0..inst.m).map(|i| bundle.pis[i].benchmark()).sum();
        prop_assert!((total - sol.objective).abs() <= 1e-7);
    }
}

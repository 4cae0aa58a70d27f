//! Property tests for the reclustering potential: rescale-map order
//! preservation, phi bounds and monotonicity, and clean audits on random
//! traces.

use proptest::prelude::*;

use partsim_core::potential::{audit_trace, random_trace, RescaleMap, C_AUDIT, C_TOTAL};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rescale_map_preserves_order(
        edges in prop::collection::vec(-10_000i64..10_000, 1..64),
        probes in prop::collection::vec(-12_000i64..12_000, 1..32),
    ) {
        let map = RescaleMap::from_edges(edges.clone());
        let mut sorted = probes.clone();
        sorted.sort_unstable();
        for pair in sorted.windows(2) {
            prop_assert!(map.ceil_rank(pair[0]) <= map.ceil_rank(pair[1]));
            prop_assert!(map.floor_rank(pair[0]) <= map.floor_rank(pair[1]));
        }
        // Ranks of the edges themselves are exact: ceil == floor.
        for &e in &edges {
            prop_assert_eq!(map.ceil_rank(e), map.floor_rank(e));
        }
        prop_assert!(map.rank_count() <= edges.len());
    }

    #[test]
    fn phi_is_bounded_and_monotone(
        edges in prop::collection::vec(-10_000i64..10_000, 2..64),
        a in -12_000i64..12_000,
        b in -12_000i64..12_000,
        widen in 0i64..4000,
    ) {
        let map = RescaleMap::from_edges(edges);
        let (a, b) = (a.min(b), a.max(b));
        let phi = map.phi(a, b);
        prop_assert!(phi >= 0.0);
        // Upper bound: ranks live in 1..=rank_count, so the rescaled width
        // never exceeds the rank count.
        let bound = 4.0 + 4.0 * (map.rank_count().max(1) as f64).log2();
        prop_assert!(phi <= bound + 1e-9, "phi {phi} above bound {bound}");
        // A point range carries no potential.
        prop_assert_eq!(map.phi(a, a), 0.0);
        // Widening the range never lowers the potential.
        let wider = map.phi(a - widen, b + widen);
        prop_assert!(wider >= phi - 1e-12);
    }

    #[test]
    fn random_traces_audit_clean(
        seed in any::<u64>(),
        capacity in prop::sample::select(vec![2usize, 4, 16, 64]),
    ) {
        let trace = random_trace(seed, 120, 60, capacity);
        let report = audit_trace(&trace, C_AUDIT, C_TOTAL).unwrap();
        prop_assert!(report.ok(), "violations: {:?}", report.violations);
        prop_assert!(report.max_step_lhs <= report.step_bound);
        prop_assert!(report.total_lhs <= C_TOTAL * report.total_scale);
        // Potential audit invariants on the step log.
        for step in &report.steps {
            prop_assert!(step.k > 0 || step.op == "query");
            if step.op == "recluster" {
                prop_assert!(step.bound > 0.0);
            }
        }
    }
}

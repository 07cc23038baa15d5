use enhperc::estimators::survival_depth;
use enhperc::front::bracket_run;
use enhperc::{FrontState, Params, RandomField, SurvivalSemantics};
use proptest::prelude::*;

const ROWS: usize = 100;

fn columns(mask: u16) -> Vec<i64> {
    (0..16).filter(|k| mask >> k & 1 == 1).map(|k| 2 * k as i64 - 16).collect()
}

fn ordered_params() -> impl Strategy<Value = (Params, Params)> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b, c, d)| {
        (
            Params::new(a.min(b), c.min(d)).unwrap(),
            Params::new(a.max(b), c.max(d)).unwrap(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Shared bonds make the process attractive and additive: larger
    /// initial sets and larger parameters give larger rows, and the run from
    /// a union is the union of the runs.
    #[test]
    fn containment_and_union(
        a in 1u16..,
        b in 1u16..,
        (low, high) in ordered_params(),
        seed in any::<u64>(),
    ) {
        let field = RandomField::new(seed);
        let union = FrontState::init_finite(&columns(a | b)).unwrap();
        let mut sa = union.with_columns(&columns(a)).unwrap();
        let mut sb = union.with_columns(&columns(b)).unwrap();
        let mut su = union.clone();
        let mut sa_low = union.with_columns(&columns(a)).unwrap();
        let mut before = (None, union.curr().right_edge());
        for _ in 0..ROWS {
            sa.advance(&high, &field).unwrap();
            sb.advance(&high, &field).unwrap();
            su.advance(&high, &field).unwrap();
            sa_low.advance(&low, &field).unwrap();
            prop_assert!(sa_low.curr().is_subset_of(sa.curr()));
            prop_assert!(sa.curr().is_subset_of(su.curr()));
            let mut joined = sa.curr().columns();
            joined.extend(sb.curr().columns());
            joined.sort_unstable();
            joined.dedup();
            prop_assert_eq!(joined, su.curr().columns());
            // a new rightmost site comes by a diagonal from the row below or
            // by a vertical bond from two rows down
            if let Some(r) = su.curr().right_edge() {
                let reach = before.1.map(|m| m + 1).max(before.0);
                prop_assert!(reach.is_some_and(|m| r <= m));
            }
            before = (before.1, su.curr().right_edge());
        }
    }

    /// Survival depth and the bracketed half-line edges are monotone in the
    /// parameters on every sample, and the edge never outruns speed one.
    #[test]
    fn survival_and_edges_are_monotone((low, high) in ordered_params(), seed in any::<u64>()) {
        let field = RandomField::new(seed);
        for sem in [SurvivalSemantics::Strict, SurvivalSemantics::Lenient] {
            let d_low = survival_depth(&low, ROWS, &field, sem).unwrap();
            let d_high = survival_depth(&high, ROWS, &field, sem).unwrap();
            prop_assert!(d_low <= d_high);
        }
        let run_low = bracket_run(&low, ROWS + 16, ROWS, &field).unwrap();
        let run_high = bracket_run(&high, ROWS + 16, ROWS, &field).unwrap();
        for k in 0..=ROWS {
            // None (empty) sorts below every edge
            prop_assert!(run_low.lo.r[k] <= run_high.lo.r[k]);
            prop_assert!(run_low.hi.r[k] <= run_high.hi.r[k]);
            prop_assert!(run_low.lo.r[k] <= run_low.hi.r[k]);
            if let Some(r) = run_high.hi.r[k] {
                prop_assert!(r <= k as i64);
            }
        }
    }
}

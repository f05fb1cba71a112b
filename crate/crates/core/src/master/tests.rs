use std::time::Duration;

use proptest::prelude::*;

use super::*;

fn pool(m: usize, cols: &[(&[usize], f64)]) -> RmpState {
    RmpState::with_columns(
        m,
        cols.iter().map(|(rows, c)| Column::from_rows(rows.to_vec(), *c)).collect(),
    )
}

/// Exhaustive minimum over all subsets of real columns that cover every row.
pub(crate) fn enumerate_ip(m: usize, cols: &[Column]) -> Option<f64> {
    let n = cols.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let mut covered = vec![false; m];
        let mut cost = 0.0;
        for (j, c) in cols.iter().enumerate() {
            if mask & (1 << j) != 0 {
                cost += c.cost;
                for &r in &c.rows {
                    covered[r] = true;
                }
            }
        }
        if covered.iter().all(|&c| c) && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

fn check_certificates(state: &RmpState, sol: &LpSolution) {
    let m = state.rows();
    for &u in &sol.duals {
        assert!(u >= -1e-9, "negative dual {u}");
    }
    let mut lhs = vec![0.0; m];
    for (col, &x) in state.columns().iter().zip(&sol.x) {
        assert!(x >= -1e-9);
        let rc = reduced_cost(col, &sol.duals);
        assert!(rc >= -1e-6, "dual infeasible column, rc {rc}");
        assert!((x * rc).abs() <= 1e-6, "complementary slackness x={x} rc={rc}");
        for &r in &col.rows {
            lhs[r] += x;
        }
    }
    for (r, &a) in lhs.iter().enumerate() {
        assert!(a >= 1.0 - 1e-9, "row {r} uncovered");
        assert!((sol.duals[r] * (a - 1.0)).abs() <= 1e-6, "row slackness");
    }
    let dual_obj: f64 = sol.duals.iter().sum();
    assert!((dual_obj - sol.objective).abs() <= 1e-6, "strong duality");
}

#[test]
fn initial_pool() {
    let mut s = RmpState::new(5);
    assert_eq!(s.columns().len(), 5);
    assert!(s.columns().iter().all(|c| c.artificial));
    let sol = s.lp_solve().unwrap();
    assert_eq!(sol.objective, 5.0 * BIG);
    assert_eq!(sol.x, vec![1.0; 5]);
}

#[test]
fn empty_pool() {
    let mut s = RmpState::new(0);
    assert!(s.columns().is_empty());
    assert_eq!(s.lp_solve().unwrap().objective, 0.0);
}

#[test]
fn two_overlapping_columns() {
    // rows {1,2} and {2,3} with 1-based numbering
    let mut s = pool(3, &[(&[0, 1], 1.0), (&[1, 2], 1.0)]);
    let sol = s.lp_solve().unwrap().clone();
    assert!((sol.objective - 2.0).abs() < 1e-9);
    assert!((sol.x[3] - 1.0).abs() < 1e-9 && (sol.x[4] - 1.0).abs() < 1e-9);
    check_certificates(&s, &sol);
}

#[test]
fn single_covering_column() {
    let mut s = pool(4, &[(&[0, 1, 2, 3], 1.0)]);
    let sol = s.lp_solve().unwrap().clone();
    assert!((sol.objective - 1.0).abs() < 1e-9);
    assert!((sol.duals.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    check_certificates(&s, &sol);
}

#[test]
fn reduced_cost_arithmetic() {
    let col = Column::from_rows(vec![0, 3], 1.5);
    assert_eq!(reduced_cost(&col, &[0.5, 9.0, 9.0, 0.25]), 0.75);
    assert_eq!(reduced_cost(&col, &[0.0; 4]), 1.5);
}

#[test]
fn add_dedup_and_monotone() {
    let mut s = RmpState::new(3);
    let before = s.lp_solve().unwrap().objective;
    let col = Column::from_rows(vec![0, 1], 1.0);
    assert_eq!(s.add_columns(vec![col.clone()]).unwrap(), 1);
    assert_eq!(s.columns().len(), 4);
    assert_eq!(s.add_columns(vec![col]).unwrap(), 0);
    assert_eq!(s.columns().len(), 4);
    let after = s.lp_solve().unwrap().objective;
    assert!(after <= before);
    let sol = s.solution().unwrap().clone();
    for (col, &x) in s.columns().iter().zip(&sol.x) {
        if x > 1e-9 {
            assert!(reduced_cost(col, &sol.duals).abs() <= 1e-6);
        }
    }
}

#[test]
fn not_improving_rejected() {
    let mut s = pool(2, &[(&[0, 1], 1.0)]);
    s.lp_solve().unwrap();
    let err = s.add_columns(vec![Column::from_rows(vec![0], 1.0)]).unwrap_err();
    assert!(matches!(err, MasterError::NotImproving { .. }));
}

#[test]
fn triangle_ip() {
    let mut s = pool(3, &[(&[0, 1], 1.0), (&[1, 2], 1.0), (&[0, 2], 1.0)]);
    let lp = s.lp_solve().unwrap().objective;
    assert!((lp - 1.5).abs() < 1e-9);
    let ip = s.ip_finish(Duration::from_secs(10)).unwrap();
    assert_eq!(ip.objective, 2.0);
    assert!(ip.optimal);
    assert_eq!(ip.selected.len(), 2);
    let real: Vec<Column> = s.columns()[3..].to_vec();
    assert_eq!(enumerate_ip(3, &real), Some(2.0));
}

#[test]
fn integral_lp_returned_unchanged() {
    let mut s = pool(3, &[(&[0, 1], 1.0), (&[2], 1.5)]);
    let lp = s.lp_solve().unwrap().objective;
    let ip = s.ip_finish(Duration::from_secs(1)).unwrap();
    assert_eq!(ip.objective, lp);
    assert_eq!(ip.nodes, 0);
    assert_eq!(ip.selected, vec![3, 4]);
}

#[test]
fn uncovered_row_is_infeasible() {
    let mut s = pool(3, &[(&[0, 1], 1.0)]);
    s.lp_solve().unwrap();
    assert_eq!(s.ip_finish(Duration::from_secs(1)), Err(MasterError::PoolInfeasible));
}

fn random_pool() -> impl Strategy<Value = (usize, Vec<Column>)> {
    (2usize..7).prop_flat_map(|m| {
        let col = (prop::collection::btree_set(0..m, 1..=m.min(4)), prop::bool::ANY)
            .prop_map(|(rows, dh)| Column::from_rows(rows.into_iter().collect(), if dh { 1.5 } else { 1.0 }));
        (Just(m), prop::collection::vec(col, 1..=15))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lp_certificates_hold((m, cols) in random_pool()) {
        let mut s = RmpState::with_columns(m, cols);
        let sol = s.lp_solve().unwrap().clone();
        check_certificates(&s, &sol);
    }

    #[test]
    fn ip_matches_enumeration((m, cols) in random_pool()) {
        let mut s = RmpState::with_columns(m, cols);
        let real: Vec<Column> = s.columns()[m..].to_vec();
        let lp = s.lp_solve().unwrap().objective;
        match enumerate_ip(m, &real) {
            Some(best) => {
                let ip = s.ip_finish(Duration::from_secs(10)).unwrap();
                prop_assert!((ip.objective - best).abs() < 1e-9, "ip {} vs {}", ip.objective, best);
                prop_assert!(ip.objective >= lp - 1e-9);
                let mut covered = vec![false; m];
                for &j in &ip.selected {
                    for &r in &s.columns()[j].rows { covered[r] = true; }
                }
                prop_assert!(covered.iter().all(|&c| c));
            }
            None => prop_assert_eq!(s.ip_finish(Duration::from_secs(10)), Err(MasterError::PoolInfeasible)),
        }
    }
}

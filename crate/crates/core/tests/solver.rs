use approx::assert_abs_diff_eq;
use uss_core::bellman::{
    compute_thresholds, mean_bounds, solve_value_table, Direction, ProblemSpec, ThresholdTable,
    ValueTable, DEFAULT_SLACK,
};

fn solved(n: usize, d: usize, m: usize) -> (ValueTable, ThresholdTable) {
    let vt = solve_value_table(&ProblemSpec::new(n, d, m).unwrap());
    let tt = compute_thresholds(&vt).unwrap();
    (vt, tt)
}

/// Plain backward induction on the same grid: midpoint quadrature of the
/// max, no switch points, no cumulative sums.
fn naive_initial_value(n: usize, d: usize, m: usize, quad: usize) -> f64 {
    let grid: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
    let interp = |row: &[f64], x: f64| {
        let pos = x * (m - 1) as f64;
        let j = (pos.floor() as usize).min(m - 2);
        let t = pos - j as f64;
        row[j] * (1.0 - t) + row[j + 1] * t
    };
    let integrate = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| {
        if hi <= lo {
            return 0.0;
        }
        let h = (hi - lo) / quad as f64;
        (0..quad).map(|q| f(lo + (q as f64 + 0.5) * h)).sum::<f64>() * h
    };
    let mut next = vec![vec![0.0f64; m]; d + 1];
    for _ in 0..n {
        let mut cur = vec![vec![0.0; m]; d + 1];
        for k in 0..=d {
            for (j, &s) in grid.iter().enumerate() {
                let keep = next[k][j];
                let same = |x: f64| keep.max(1.0 + interp(&next[k], x));
                let turn = |x: f64| {
                    if k < d {
                        keep.max(1.0 + interp(&next[k + 1], x))
                    } else {
                        keep
                    }
                };
                cur[k][j] = match Direction::of_block(k) {
                    Direction::Up => integrate(0.0, s, &turn) + integrate(s, 1.0, &same),
                    Direction::Down => integrate(0.0, s, &same) + integrate(s, 1.0, &turn),
                };
            }
        }
        next = cur;
    }
    next[0][0]
}

#[test]
fn agrees_with_naive_quadrature() {
    for (n, d) in [(12, 0), (20, 1), (10, 2)] {
        let (vt, _) = solved(n, d, 201);
        let naive = naive_initial_value(n, d, 201, 4000);
        assert_abs_diff_eq!(vt.initial_value(), naive, epsilon = 1e-4);
    }
}

#[test]
fn hand_values() {
    for d in 0..4 {
        assert_abs_diff_eq!(solved(1, d, 1001).0.initial_value(), 1.0, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(solved(2, 0, 1001).0.initial_value(), 1.5, epsilon = 1e-3);
    assert_abs_diff_eq!(solved(2, 1, 1001).0.initial_value(), 2.0, epsilon = 1e-3);
    let c = 3f64.sqrt() - 1.0;
    let v3 = 1.5 + c - c * c / 2.0 - c.powi(3) / 6.0;
    assert_abs_diff_eq!(solved(3, 0, 2001).0.initial_value(), v3, epsilon = 1e-5);
}

#[test]
fn table_invariants_hold_everywhere() {
    for (n, d) in [(30, 0), (40, 1), (25, 2), (15, 3)] {
        let (vt, tt) = solved(n, d, 201);
        let spec = vt.spec();
        let h = spec.step();
        for i in 1..=n {
            for k in 0..=d {
                let row = vt.row(i, k);
                let later = vt.row(i + 1, k);
                let (lo, hi) = (tt.lower_row(i, k), tt.upper_row(i, k));
                for j in 0..spec.grid_size() {
                    let v = row[j];
                    assert!((0.0..=(n - i + 1) as f64 + 1e-12).contains(&v));
                    assert!(v + 1e-12 >= later[j], "time monotone at i={i} k={k} j={j}");
                    if j > 0 {
                        match Direction::of_block(k) {
                            Direction::Up => assert!(row[j] <= row[j - 1] + 1e-12),
                            Direction::Down => assert!(row[j] + 1e-12 >= row[j - 1]),
                        }
                    }
                    let s = spec.grid_point(j);
                    let (a, b) = (lo[j], hi[j]);
                    assert!(0.0 <= a && a <= s && s <= b && b <= 1.0);
                    if !spec.turn_available(k) {
                        match Direction::of_block(k) {
                            Direction::Up => assert_eq!(a, s),
                            Direction::Down => assert_eq!(b, s),
                        }
                    }
                    let gain = v - later[j];
                    assert!(gain >= -1e-12);
                    assert!(
                        gain <= b - a + 2.0 * h,
                        "i={i} k={k} j={j}: {gain} > {}",
                        b - a
                    );
                    assert!(b - a <= 1.0);
                }
            }
        }
    }
}

#[test]
fn final_block_value_strictly_decreases() {
    let (vt, _) = solved(40, 0, 201);
    for i in 1..=40 {
        let row = vt.row(i, 0);
        for j in 0..row.len() - 20 {
            assert!(row[j] > row[j + 20]);
        }
    }
}

#[test]
fn remaining_turn_budget_determines_the_value() {
    let m = 101;
    let (v3, _) = solved(20, 3, m);
    let (v1, _) = solved(20, 1, m);
    let (v2, _) = solved(20, 2, m);
    for i in 1..=21 {
        // two blocks left and increasing
        assert_eq!(v3.row(i, 2), v1.row(i, 0));
        // three blocks left, decreasing, is the mirror image of three
        // blocks left increasing
        let down = v3.row(i, 1);
        let up = v2.row(i, 0);
        for j in 0..m {
            assert_abs_diff_eq!(down[j], up[m - 1 - j], epsilon = 1e-9);
        }
    }
}

#[test]
fn final_step_interval_is_full_when_a_turn_remains() {
    let (_, tt) = solved(30, 1, 101);
    for j in 0..101 {
        assert_eq!(tt.lower_row(30, 0)[j], 0.0);
        assert_eq!(tt.upper_row(30, 0)[j], 1.0);
    }
}

#[test]
fn values_sit_between_the_bounds() {
    for d in 0..3 {
        for n in [50, 200] {
            let (vt, _) = solved(n, d, 1001);
            let (lo, hi) = mean_bounds(n, d, DEFAULT_SLACK);
            let v = vt.initial_value();
            assert!(lo < v && v < hi, "n={n} d={d}: {lo} < {v} < {hi}");
        }
    }
}

#[test]
fn value_grows_with_the_turn_budget() {
    let vals: Vec<f64> = (0..4)
        .map(|d| solved(60, d, 401).0.initial_value())
        .collect();
    assert!(vals.windows(2).all(|w| w[0] < w[1]), "{vals:?}");
}

#[test]
fn refining_the_grid_changes_little() {
    let coarse = solved(300, 1, 401).0.initial_value();
    let fine = solved(300, 1, 801).0.initial_value();
    let finer = solved(300, 1, 1601).0.initial_value();
    assert!((coarse - fine).abs() < 0.01);
    assert!((fine - finer).abs() <= (coarse - fine).abs() + 1e-9);
}

use flowdecay::maps::{DeclaredTail, InducedMap};
use flowdecay::transfer::*;
use proptest::prelude::*;

const T_RANGE: (f64, f64) = (1e3, 1e120);

fn budget(beta: f64, gamma: f64, p: f64, d: f64, schedule: Schedule) -> RateBudget {
    let tail = TailData::power_law(beta, gamma, 2000).unwrap();
    let eps = 0.1;
    let q = 1.2 * budget_constraints(beta, gamma, p, d, 1.0, eps, schedule).q_min;
    rate_budget(&tail, p, d, q, eps, schedule, T_RANGE, 60).unwrap()
}

fn upper(b: &RateBudget) -> &[BudgetRow] {
    &b.rows[b.rows.len() / 2..]
}

fn settled_ratio(b: &RateBudget) -> f64 {
    let r: Vec<f64> = upper(b).iter().map(|x| x.log_total().exp() / x.predicted_rate).collect();
    r.iter().copied().fold(0.0, f64::max) / r.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn beta_two_gives_t_to_the_minus_two() {
    let b = budget(2.0, 0.0, 3.0, 0.1, Schedule::Bounded);
    assert!(b.constraints.violations.is_empty());
    assert!(upper(&b).iter().all(|r| r.dominant == 1));
    assert!((b.total_fit.0 - 2.0).abs() < 1e-3, "{:?}", b.total_fit);
    assert!(b.total_fit.1.abs() < 1e-2, "{:?}", b.total_fit);
    assert!(settled_ratio(&b) < 1.01);
    // the remaining terms decay strictly faster
    assert!(b.term_fits[2].0 > 2.1 && b.term_fits[3].0 > 2.1, "{:?}", b.term_fits);
}

#[test]
fn beta_one_with_logs_gives_log_squared_over_t() {
    let b = budget(1.0, 2.0, 3.0, 0.1, Schedule::Bounded);
    assert!((b.total_fit.0 - 1.0).abs() < 1e-2, "{:?}", b.total_fit);
    assert!((b.total_fit.1 - 2.0).abs() < 0.2, "{:?}", b.total_fit);
    assert!(settled_ratio(&b) < 1.1);
}

#[test]
fn beta_half_needs_p_above_three() {
    let c = budget_constraints(0.5, 0.0, 3.0, 0.04, 1e3, 0.1, Schedule::Bounded);
    assert_eq!(c.p_threshold, 3.0);
    assert_eq!(c.p_min, 4);
    let tail = TailData::power_law(0.5, 0.0, 2000).unwrap();
    let err = rate_budget(&tail, 3.0, 0.04, 1e3, 0.1, Schedule::Bounded, T_RANGE, 60).unwrap_err();
    assert!(err.to_string().contains("p = 3 must exceed 3"), "{err}");
    let b = budget(0.5, 0.0, 4.0, 0.04, Schedule::Bounded);
    for k in 0..2 {
        assert!((b.term_fits[k].0 - 0.5).abs() < 1e-3, "{:?}", b.term_fits);
    }
    assert!((b.total_fit.0 - 0.5).abs() < 1e-3);
}

#[test]
fn unbounded_schedule_costs_beta_plus_one_logs() {
    for (beta, p) in [(2.0, 6.0), (0.5, 10.0)] {
        let b = budget(beta, 0.0, p, 0.02, Schedule::Unbounded);
        assert!((b.total_fit.0 - beta).abs() < 1e-3, "{:?}", b.total_fit);
        assert!((b.total_fit.1 - (beta + 1.0)).abs() < 0.05, "{:?}", b.total_fit);
        assert!(settled_ratio(&b) < 1.05);
    }
}

#[test]
fn other_constraint_violations_are_reported() {
    let c = budget_constraints(2.0, 0.0, 3.0, 0.5, 5.0, 0.1, Schedule::Bounded);
    assert_eq!(c.violations.len(), 2, "{:?}", c.violations);
    assert!((c.d_max - 0.2).abs() < 1e-12);
    assert!((c.q_min - 35.0).abs() < 1e-9);
}

#[test]
fn d_n_growth_classes() {
    for (beta, gamma) in [(0.5, 0.0), (0.5, 1.0), (1.0, 0.0), (1.0, 2.0), (2.0, 0.0)] {
        let tail = TailData::power_law(beta, gamma, 1000).unwrap();
        let chk = dn_growth_check(&tail, 1e2, 1e14, 25);
        assert_eq!(chk.class, DnClass::classify(beta, gamma));
        assert!(chk.nondecreasing);
        assert!(chk.spread < 1.1, "β = {beta}, γ = {gamma}: {}", chk.spread);
    }
}

#[test]
fn d_n_of_a_piecewise_linear_map() {
    // μ(r = k) ∝ k^{-3}: exact sums from the widths
    let k_max = 400;
    let raw: Vec<f64> = (1..=k_max).map(|k| (k as f64).powi(-3)).collect();
    let z: f64 = raw.iter().sum();
    let widths: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let returns: Vec<usize> = (1..=k_max).collect();
    let ind = InducedMap::piecewise_linear(&widths, &returns, Some(DeclaredTail { beta: 1.0, gamma: 0.0 })).unwrap();
    let tail = TailData::from_induced(&ind, k_max).unwrap();
    for n in [1usize, 7, 50, 400] {
        let exact: f64 = (1..=n).map(|k| k as f64 * widths[k - 1..].iter().sum::<f64>()).sum();
        assert!((tail.d_n(n as f64) - exact).abs() < 1e-12 * exact, "N = {n}");
    }
}

#[test]
fn csv_columns() {
    let b = budget(2.0, 0.0, 3.0, 0.1, Schedule::Bounded);
    let mut buf = Vec::new();
    b.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,N,term1,term2,term3,term4,dominant,predicted_rate"));
    assert_eq!(lines.count(), b.rows.len());
    assert_eq!(b.d_tilde().len(), b.rows.len());
}

fn y_tail_brute(ex: &ColumnConstantExample, n: f64) -> f64 {
    (1..=400).filter(|&k| ex.induced_roof(k) >= n).map(|k| ex.mass(k)).sum()
}

#[test]
fn column_constant_example_respects_its_tail_bound() {
    for beta in [0.5, 1.0, 2.0] {
        let ex = ColumnConstantExample::new(beta).unwrap();
        for n in [10.0, 1e3, 1e6, 1e9] {
            let (a, b) = (ex.y_tail(n), y_tail_brute(&ex, n));
            assert!((a - b).abs() <= 1e-12 * b, "β = {beta}, n = {n}: {a} vs {b}");
        }
        let r = ex.report(10.0, 1e12, 40).unwrap();
        assert!(r.bound_constant < 1.0, "{}", r.bound_constant);
        assert!(r.bound_ratio_decay < 1e-6, "{}", r.bound_ratio_decay);
        assert!(r.gap_constant < 2.0, "{}", r.gap_constant);
        assert!(r.delta_constant < 1.0, "{}", r.delta_constant);
        assert!(r.fit.0 > beta + 1.5, "{:?}", r.fit);
    }
}

#[test]
fn d_n_stays_finite_for_huge_n() {
    for beta in [0.3, 1.0, 2.5] {
        let tail = TailData::power_law(beta, 1.5, 2000).unwrap();
        let mut prev = 0.0;
        for e in [10, 50, 100, 200, 300] {
            let d = tail.d_n(10f64.powi(e));
            assert!(d.is_finite() && d >= prev * (1.0 - 1e-10), "β = {beta}, N = 1e{e}: {d}");
            prev = d;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn admissible_budgets_decay_at_rate_beta(beta in 0.3f64..3.0, gamma in 0.0f64..2.0, dp in 0.2f64..2.0, df in 0.1f64..0.9) {
        let c0 = budget_constraints(beta, gamma, 1.0, 0.0, 1.0, 0.1, Schedule::Bounded);
        let p = c0.p_threshold + dp;
        let d = df * budget_constraints(beta, gamma, p, 0.0, 1.0, 0.1, Schedule::Bounded).d_max;
        let b = budget(beta, gamma, p, d, Schedule::Bounded);
        // the slowest terms decay at t^{-β}, the others strictly faster
        prop_assert!((b.term_fits[0].0 - beta).abs() < 0.01 && (b.term_fits[1].0 - beta).abs() < 0.01, "{:?}", b.term_fits);
        prop_assert!(b.term_fits[2].0 > beta && b.term_fits[3].0 > beta, "{:?}", b.term_fits);
        // N^{2+d}d_N-type term: t^{-p} (N^{g+d})^{p+2} with d_N ≍ N^g up to logs
        let g = (1.0 - beta).max(0.0);
        let want = p - (p + 2.0) * (g + d);
        prop_assert!((b.term_fits[3].0 - want).abs() < 0.02, "{} vs {want}", b.term_fits[3].0);
        // near the p threshold the faster terms can still dominate on a finite
        // grid; once they no longer do, the total has the slow rate
        if b.rows[b.rows.len() / 2..].iter().all(|r| r.dominant <= 1) {
            prop_assert!((b.total_fit.0 - beta).abs() < 0.01, "{:?}", b.total_fit);
        }
    }

    #[test]
    fn violations_iff_outside_region(beta in 0.3f64..3.0, p in 0.5f64..12.0, d in -0.1f64..0.5, q in 1.0f64..400.0) {
        let c = budget_constraints(beta, 0.0, p, d, q, 0.1, Schedule::Bounded);
        let inside = p > c.p_threshold && d > 0.0 && d < c.d_max && q > c.q_min;
        prop_assert_eq!(c.violations.is_empty(), inside);
    }
}

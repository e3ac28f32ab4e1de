use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

use flowdecay::maps::{InducedMap, MapModel};
use flowdecay::roof::{Observable, Roof};
use flowdecay::suspension::*;
use flowdecay::tower::Tower;
use proptest::prelude::*;

fn doubling(roof: Roof) -> FlowSystem {
    let ind = InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2).unwrap();
    FlowSystem::new(Tower::with_default_theta(Arc::new(ind)).unwrap(), roof).unwrap()
}

fn pm_system() -> &'static FlowSystem {
    static S: OnceLock<FlowSystem> = OnceLock::new();
    S.get_or_init(|| {
        let map = MapModel::pomeau_manneville(0.5).unwrap();
        let ind = InducedMap::induce(&map, (0.5, 1.0), 100_000).unwrap();
        FlowSystem::new(Tower::with_default_theta(Arc::new(ind)).unwrap(), Roof::cosine(2.0, 1.0).unwrap()).unwrap()
    })
}

#[test]
fn unit_roof_flow_cosine_is_exact() {
    // ρ(t) = E[cos 2πu cos 2π(u+t)] = cos(2πt)/2 for u uniform
    let sys = doubling(Roof::constant(1.0).unwrap());
    let v = Observable::FlowCosine { freq: 1.0 };
    let grid = [0.0, 0.125, 0.25, 0.5, 3.75, 10.0];
    let s = correlation_mc(&sys, &v, &v, &grid, 100_000, 3).unwrap();
    for i in 0..grid.len() {
        let want = 0.5 * (TAU * grid[i]).cos();
        assert!((s.rho[i] - want).abs() <= 4.0 * s.stderr[i].max(1e-4), "t = {}: {} vs {want}", grid[i], s.rho[i]);
    }
}

#[test]
fn stationary_samples_have_the_invariant_marginals() {
    // unit roof over the doubling map: Lebesgue in x, uniform in u
    let sys = doubling(Roof::constant(1.0).unwrap());
    let pts = sys.sample_stationary(1, 50_000).unwrap();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let mu = pts.iter().map(|p| p.u).sum::<f64>() / n;
    let se = (1.0 / 12.0 / n).sqrt();
    assert!((mx - 0.5).abs() < 4.0 * se, "{mx}");
    assert!((mu - 0.5).abs() < 4.0 * se, "{mu}");
    // nonconstant roof: the height is uniform under the roof
    let sys = doubling(Roof::cosine(2.0, 1.0).unwrap());
    let pts = sys.sample_stationary(2, 50_000).unwrap();
    let frac = pts.iter().map(|p| p.u / sys.roof_at(p.x)).sum::<f64>() / n;
    assert!((frac - 0.5).abs() < 4.0 * se, "{frac}");
    // and x is Lebesgue weighted by h: E[x] = ∫ x h / ∫ h
    let (num, den) = (0..100_000).fold((0.0, 0.0), |(a, b), i| {
        let x = (i as f64 + 0.5) / 100_000.0;
        let h = sys.roof_at(x);
        (a + x * h, b + h)
    });
    let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    assert!((mx - num / den).abs() < 5.0 * (1.0 / 12.0 / n).sqrt(), "{mx} vs {}", num / den);
}

#[test]
fn flow_preserves_the_stationary_measure() {
    let sys = pm_system();
    let pts = sys.sample_stationary(4, 40_000).unwrap();
    let n = pts.len() as f64;
    let mean = |xs: &mut dyn Iterator<Item = f64>| xs.sum::<f64>() / n;
    let before = mean(&mut pts.iter().map(|p| p.x));
    for t in [0.7, 5.0, 30.0] {
        let after = mean(&mut pts.iter().map(|p| sys.flow(p, t).unwrap().0.x));
        // two correlated means of a variable in [0, 1]
        assert!((after - before).abs() < 8.0 * (0.25 / n).sqrt(), "t = {t}: {after} vs {before}");
    }
}

#[test]
fn mixing_needs_a_nonconstant_roof() {
    let grid = [0.0, 5.0, 20.0];
    let v = Observable::FlowCosine { freq: 1.0 };
    let flat = correlation_mc(&doubling(Roof::constant(1.0).unwrap()), &v, &v, &grid, 100_000, 3).unwrap();
    assert!((flat.rho[2] - 0.5).abs() < 0.01, "{}", flat.rho[2]);
    let c = Observable::Coordinate { center: 0.5 };
    let mixing = correlation_mc(&doubling(Roof::cosine(2.0, 1.0).unwrap()), &c, &c, &grid, 200_000, 3).unwrap();
    assert!(mixing.rho[2].abs() < 0.01, "{}", mixing.rho[2]);
    assert!(mixing.rho[0] > 0.05);
    assert!(flat.rho[2].abs() > 10.0 * mixing.rho[2].abs());
}

#[test]
fn return_time_truncation_error_has_a_stable_constant() {
    let sys = pm_system();
    for v in [
        Observable::Coordinate { center: 0.5 },
        Observable::SmoothIndicator { a: 0.0, b: 0.1, width: 0.02 },
    ] {
        let tab = truncation_error_experiment(sys, &v, &v, &[10, 20, 40], &[5.0, 10.0, 20.0], 200_000, 7).unwrap();
        assert!(tab.holds());
        assert!(tab.stability() <= 3.0, "{v:?}: {:?}", tab.c_per_n);
        // the error shrinks with N at every t
        for t in [5.0, 10.0, 20.0] {
            let d: Vec<f64> = tab.rows.iter().filter(|r| r.t == t).map(|r| r.diff.abs()).collect();
            assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        }
        // the bound has the declared shape
        for r in &tab.rows {
            let ratio = r.bound / r.closed_form;
            assert!(ratio > 0.1 && ratio < 10.0, "{r:?}");
        }
    }
    let unbounded = doubling(Roof::singular(1.0).unwrap());
    let v = Observable::Coordinate { center: 0.5 };
    assert!(truncation_error_experiment(&unbounded, &v, &v, &[10], &[1.0], 1000, 1).is_err());
}

#[test]
fn roof_truncation_error_has_a_stable_constant() {
    let sys = doubling(Roof::singular(1.0).unwrap());
    let v = Observable::Cosine { freq: 1.0 };
    let tab = roof_truncation_experiment(&sys, &v, &v, &[10, 20, 40], &[5.0, 10.0, 20.0], 2.0, 200_000, 7).unwrap();
    assert!(tab.holds());
    assert!(tab.stability() <= 3.0, "{:?}", tab.c_per_n);
    // r ≡ 1, so the second truncation changes nothing
    assert!(tab.second_truncation.iter().all(|s| s.2 == 0.0));
    let bounded = doubling(Roof::cosine(2.0, 1.0).unwrap());
    assert!(roof_truncation_experiment(&bounded, &v, &v, &[10], &[1.0], 2.0, 1000, 1).is_err());
}

#[test]
fn roof_truncation_right_set_respects_its_bound() {
    let sys = doubling(Roof::singular(1.0).unwrap());
    for (n, k) in [(10.0, 1.0), (10.0, 5.0), (40.0, 10.0)] {
        let m = ekk_measure(&sys, n, k, 200_000).unwrap();
        assert!(m.measured <= m.bound + 3.0 * m.stderr, "{n} {k}: {m:?}");
        assert!(m.measured > 0.0);
    }
    let pm = pm_system();
    assert!(ekk_measure(pm, 10.0, 1.0, 100).is_err());
}

#[test]
fn buffered_observable_agrees_off_the_strip() {
    let sys = pm_system().with_return_truncation(10);
    let v = Observable::FlowCosine { freq: 1.0 };
    let b = BufferedObservable::new(&v, 10, 2);
    assert!(!b.is_passthrough());
    let pts = sys.sample_stationary(5, 20_000).unwrap();
    let mut changed = 0usize;
    for p in &pts {
        let h = sys.roof_at(p.x);
        let same = (b.value(&sys, p) - v.eval(p.x, p.u, h)).abs() < 1e-15;
        if !same {
            changed += 1;
            assert!(p.level == 9 && p.r > 10, "{p:?}");
        }
    }
    let frac = changed as f64 / pts.len() as f64;
    assert!(frac <= 2.0 * b.modified_measure(&sys) + 0.005, "{frac}");
    assert!(b.norm_ratio(&sys, &pts) < 10.0);
    assert!(BufferedObservable::new(&Observable::Coordinate { center: 0.5 }, 10, 2).is_passthrough());
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let sys = pm_system();
    let v = Observable::Coordinate { center: 0.5 };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let s = correlation_mc(sys, &v, &v, &[0.0, 3.0, 10.0], 20_000, 9).unwrap();
            let t = truncation_error_experiment(sys, &v, &v, &[10], &[3.0], 20_000, 9).unwrap();
            (s, t.rows[0].diff)
        })
    };
    let (a, da) = run(1);
    let (b, db) = run(4);
    assert_eq!(a, b);
    assert_eq!(da.to_bits(), db.to_bits());
}

#[test]
fn csv_outputs_have_headers() {
    let sys = doubling(Roof::cosine(2.0, 1.0).unwrap());
    let v = Observable::Coordinate { center: 0.5 };
    let s = correlation_mc(&sys, &v, &v, &[0.0, 1.0], 1000, 1).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,rho,stderr,n_samples,seed\n"));
    assert_eq!(text.lines().count(), 3);
    let tab = truncation_error_experiment(pm_system(), &v, &v, &[10, 20], &[1.0], 1000, 1).unwrap();
    let mut buf = Vec::new();
    tab.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("N,t,diff,stderr,bound,closed_form,c_fit\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn decay_fit_refuses_noise() {
    let series = CorrelationSeries {
        t: vec![2.0, 4.0, 8.0, 16.0],
        rho: vec![0.25, 0.0625, 0.015625, 1e-6],
        stderr: vec![1e-3; 4],
        n_samples: 1000,
        seed: 0,
    };
    assert!(fit_decay(&series, (2.0, 16.0), false).is_err());
    let fit = fit_decay(&series, (2.0, 8.0), false).unwrap();
    assert!((fit.exponent - 2.0).abs() < 1e-12, "{fit:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_is_a_semigroup(seed in 0u64..10_000, s in 0.0f64..15.0, t in 0.0f64..15.0) {
        let sys = pm_system();
        let p = sys.sample_one(&mut sample_rng(seed, 0)).unwrap();
        let (a, na) = sys.flow(&p, s + t).unwrap();
        let (mid, n1) = sys.flow(&p, s).unwrap();
        let (b, n2) = sys.flow(&mid, t).unwrap();
        prop_assert_eq!(na, n1 + n2);
        prop_assert_eq!((a.y, a.level, a.x), (b.y, b.level, b.x));
        prop_assert!((a.u - b.u).abs() < 1e-9);
        prop_assert!(sys.contains(&a));
    }

    #[test]
    fn truncated_flows_stay_truncated(seed in 0u64..10_000, n in 1usize..30, t in 0.0f64..40.0) {
        let sys = pm_system().with_return_truncation(n);
        let p = sys.sample_one(&mut sample_rng(seed, 1)).unwrap();
        let (q, _) = sys.flow(&p, t).unwrap();
        prop_assert!(sys.contains(&q));
        prop_assert!(q.level < n);
    }
}

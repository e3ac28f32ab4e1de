use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

use flowdecay::maps::{InducedMap, MapModel};
use flowdecay::quadrature::GaussLegendre;
use flowdecay::roof::{Observable, Roof};
use flowdecay::suspension::FlowSystem;
use flowdecay::tower::Tower;
use flowdecay::transfer::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C64 = Complex64;

fn pm_induced(alpha: f64, cells: usize) -> Arc<InducedMap<f64>> {
    Arc::new(InducedMap::induce(&MapModel::pomeau_manneville(alpha).unwrap(), (0.5, 1.0), cells).unwrap())
}

fn pm_basis() -> &'static Arc<CylinderBasis> {
    static B: OnceLock<Arc<CylinderBasis>> = OnceLock::new();
    B.get_or_init(|| Arc::new(CylinderBasis::new(pm_induced(0.5, 2000), 40, 2, 2).unwrap()))
}

fn doubling(depth: usize) -> Arc<CylinderBasis> {
    let ind = Arc::new(InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2).unwrap());
    Arc::new(CylinderBasis::new(ind, 2, depth, 2).unwrap())
}

fn random_values(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

/// `μ_Y(F_j^{-1} e)` for every leaf and branch by change of variables: the
/// integral over `e` of `ρ(F_j^{-1} x) |(F_j^{-1})'(x)|`, with the lump taking
/// `ρ(x)` minus the kept branches.
fn pushforward_by_quadrature(basis: &CylinderBasis) -> Vec<Vec<f64>> {
    let ind = basis.induced();
    let gl = GaussLegendre::<f64>::new(8);
    basis
        .leaves()
        .iter()
        .map(|e| {
            let mut per = vec![0.0; basis.cutoff() + 1];
            for (x, w) in gl.mapped(e.left, e.right) {
                let mut kept = 0.0;
                ind.for_each_inverse(x, basis.cutoff(), |j, y, g| {
                    per[j] += w * ind.density(y) * g;
                    kept += ind.density(y) * g;
                });
                per[basis.cutoff()] += w * (ind.density(x) - kept);
            }
            per
        })
        .collect()
}

#[test]
fn r_is_stochastic_at_full_cutoff() {
    let basis = CylinderBasis::new(pm_induced(0.5, 400), 400, 2, 2).unwrap();
    let r = assemble_r(&basis, basis.induced()).unwrap();
    assert!(r.row_sum_defect() < 1e-10, "{}", r.row_sum_defect());
    assert!(r.min_entry_re() >= 0.0);
    let ones = vec![C64::new(1.0, 0.0); basis.len()];
    let image = r.apply(&ones);
    assert!(image.iter().all(|x| (x - 1.0).norm() < 1e-10));
}

#[test]
fn r_is_dual_to_composition() {
    let basis = pm_basis();
    let r = assemble_r(basis, basis.induced()).unwrap();
    let push = pushforward_by_quadrature(basis);
    let leaves = basis.leaves();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let v = random_values(basis.len(), &mut rng);
        let w = random_values(basis.len(), &mut rng);
        let rv = r.apply(&v);
        let lhs: C64 = leaves.iter().enumerate().map(|(e, c)| rv[e] * w[e] * c.weight).sum();
        // ∫ v · w∘F dμ_Y = Σ_e w(e) Σ_e' v(e') μ_Y(e' ∩ F^{-1} e)
        let mut rhs = C64::new(0.0, 0.0);
        for (col, c) in leaves.iter().enumerate() {
            let j = c.symbol().unwrap_or(basis.cutoff());
            for (e, leaf) in leaves.iter().enumerate() {
                let inside = leaf.left >= c.image.0 - 1e-15 && leaf.right <= c.image.1 + 1e-15;
                if c.symbol().is_none() || inside {
                    rhs += v[col] * w[e] * push[e][j];
                }
            }
        }
        assert!((lhs - rhs).norm() < 1e-8, "{lhs} vs {rhs}");
    }
}

#[test]
fn twisted_operator_is_dual_to_composition_on_doubling() {
    let basis = doubling(6);
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let (s, z) = (C64::new(0.2, 7.0), C64::new(-0.1, 0.5));
    let op = assemble_twisted(&basis, basis.induced(), &roof, s, z, None).unwrap();
    let gl = GaussLegendre::<f64>::new(16);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let v = random_values(basis.len(), &mut rng);
        let w = random_values(basis.len(), &mut rng);
        let rv = op.apply(&v);
        let lhs: C64 = basis.leaves().iter().enumerate().map(|(e, c)| rv[e] * w[e] * c.weight).sum();
        let mut rhs = C64::new(0.0, 0.0);
        for (e, c) in basis.leaves().iter().enumerate() {
            let mid = c.midpoint();
            for (a, b) in [(c.left, mid), (mid, c.right)] {
                for (x, q) in gl.mapped(a, b) {
                    let fx = (2.0 * x).fract();
                    rhs += (s * roof.eval(x) + z).exp() * v[e] * w[basis.locate(fx)] * q;
                }
            }
        }
        assert!((lhs - rhs).norm() < 1e-8, "{lhs} vs {rhs}");
    }
}

#[test]
fn pm_r_has_a_spectral_gap() {
    let basis = CylinderBasis::new(pm_induced(0.5, 400), 60, 2, 2).unwrap();
    let r = assemble_r(&basis, basis.induced()).unwrap();
    let moduli = r.spectrum_moduli();
    assert!((moduli[0] - 1.0).abs() < 1e-10, "{}", moduli[0]);
    assert!(moduli[1] < 1.0 - 1e-3, "{}", moduli[1]);
}

#[test]
fn zero_twist_is_r_exactly() {
    let basis = pm_basis();
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let r = assemble_r(basis, basis.induced()).unwrap();
    let t = assemble_twisted(basis, basis.induced(), &roof, C64::new(0.0, 0.0), C64::new(0.0, 0.0), Some(20)).unwrap();
    assert_eq!(r.max_diff(&t), 0.0);
}

#[test]
fn roof_holder_sum_respects_its_bound() {
    let ind = pm_induced(0.5, 2000);
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let rep = roof_holder_sum(&ind, &roof, 0.5, 150, 300, 3).unwrap();
    assert!(rep.holds, "{} > {} · {}", rep.lhs, rep.h_theta, rep.r_bar);
    assert!(rep.lhs > 0.0 && rep.h_theta > 0.0);
}

#[test]
fn lasota_yorke_constant_is_uniform_in_truncation() {
    let basis = pm_basis();
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let rep = lasota_yorke_check(basis, basis.induced(), &roof, &[10, 20, 40], &[2.0, 10.0], &[0.0], 12, 10, 1).unwrap();
    assert!(rep.stability <= 2.0, "{:?}", rep.per_level);
    assert!(rep.constant_ok);
    // contraction: the seminorm ratio eventually falls below its value at n = 1
    for row in &rep.rows {
        let last = *row.contraction.last().unwrap();
        assert!(last < row.contraction[0], "{row:?}");
        assert!(last <= rep.c * row.b.abs() * 10.0);
    }
    assert!(lasota_yorke_check(basis, basis.induced(), &roof, &[10], &[0.5], &[0.0], 5, 2, 1).is_err());
}

#[test]
fn twist_perturbation_is_linear_in_a() {
    let basis = pm_basis();
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let n = 20;
    let check = |a: f64| {
        let opts = ProbeOptions { random: 40, adversarial: 3, seed: 2 };
        twist_perturbation_check(basis, basis.induced(), &roof, C64::new(a, 10.0), C64::new(0.0, 1.0), n, 0.5, opts)
            .unwrap()
    };
    let zero = check(0.0);
    assert_eq!(zero.difference, 0.0);
    let full = check(0.01 / n as f64);
    let half = check(0.005 / n as f64);
    let ratio = full.difference / half.difference;
    assert!((1.0..=4.0).contains(&ratio), "{ratio}");
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    assert!(full.d_n > 1.0);
    // one constant covers both
    let c = full.c_fit.max(half.c_fit);
    assert!(full.difference <= c * full.shape && half.difference <= c * half.shape);
}

#[test]
fn constant_roof_resonances_sit_on_the_lattice() {
    let basis = doubling(5);
    let roof = Roof::constant(1.0).unwrap();
    let grid: Vec<f64> = (1..=4).flat_map(|k| [k as f64 * TAU - 0.7, k as f64 * TAU, k as f64 * TAU + 1.3]).collect();
    let scan = resolvent_scan(&basis, basis.induced(), &roof, &grid, &[0.0], None, 1.0, ProbeOptions::default()).unwrap();
    for row in &scan.rows {
        let on_lattice = (row.b / TAU - (row.b / TAU).round()).abs() < 1e-12;
        assert_eq!(row.resonance, on_lattice, "{row:?}");
        if on_lattice {
            assert!(row.residual < 1e-12, "{row:?}");
        } else {
            assert!(row.norm.is_finite());
        }
    }
    let mut buf = Vec::new();
    scan.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("b,omega,norm_estimate,resonance_flag,alpha_fit"));
    assert_eq!(text.lines().count(), grid.len() + 1);
}

#[test]
fn perturbed_roof_has_no_resonances_and_cohomologous_roofs_agree() {
    let basis = doubling(8);
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let grid = [1.5, 4.0, 12.0, 40.0, 100.0];
    let opts = ProbeOptions { random: 60, adversarial: 5, seed: 4 };
    let scan = resolvent_scan(&basis, basis.induced(), &roof, &grid, &[0.0], None, 2.6, opts).unwrap();
    assert!(scan.flagged().is_empty());
    let alpha = scan.alpha_fit.unwrap();
    assert!(alpha.is_finite() && alpha < 2.0, "{alpha}");
    let shifted = roof.coboundary(&MapModel::doubling(), 0.001).unwrap();
    let other = resolvent_scan(&basis, basis.induced(), &shifted, &grid, &[0.0], None, 2.6, opts).unwrap();
    for (a, b) in scan.rows.iter().zip(&other.rows) {
        assert!((a.norm / b.norm - 1.0).abs() < 0.05, "{a:?} {b:?}");
    }
}

#[test]
fn resolvent_estimates_converge_under_refinement() {
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let grid = [2.0, 20.0, 100.0];
    let opts = ProbeOptions::default();
    let coarse = doubling(9);
    let fine = doubling(10);
    let a = resolvent_scan(&coarse, coarse.induced(), &roof, &grid, &[0.0], None, 2.6, opts).unwrap();
    let b = resolvent_scan(&fine, fine.induced(), &roof, &grid, &[0.0], None, 2.6, opts).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x.norm / y.norm - 1.0).abs() < 0.1, "{x:?} {y:?}");
    }
}

#[test]
fn renewal_identity_on_truncated_pm_tower() {
    let op = TowerOperator::truncated(pm_basis().clone(), 30).unwrap();
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let data = renewal_build(&op.twisted(&roof, C64::new(0.0, 0.1)), &roof, 5000).unwrap();
    let k = data.t[0].nrows();
    assert_eq!(data.t[0], nalgebra::DMatrix::<C64>::identity(k, k));
    assert_eq!(data.r.len(), 31);
    let worst = data.check_grid(16).unwrap().iter().map(|c| c.residual).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn renewal_on_unit_return_is_a_geometric_series() {
    let basis = doubling(4);
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let s = C64::new(0.1, 3.0);
    let op = TowerOperator::truncated(basis.clone(), 1).unwrap().twisted(&roof, s);
    let data = renewal_build(&op, &roof, 5000).unwrap();
    assert_eq!(data.level_sets[1].len(), basis.len());
    // T_{s,n} = R_{s,1}^n
    let r1 = &data.r[1];
    let mut power = r1.clone();
    for n in 1..data.horizon().min(12) {
        assert!((&data.t[n] - &power).norm() < 1e-12 * power.norm().max(1.0), "n = {n}");
        power = &power * r1;
    }
    // partial geometric sum Σ_{n ≤ H} (e^z R)^n = (I - (e^z R)^{H+1}) (I - e^z R)^{-1}
    let k = r1.nrows();
    let id = nalgebra::DMatrix::<C64>::identity(k, k);
    for omega in [0.0, 1.0, 2.5] {
        let z = C64::new(data.sigma, omega);
        let q = r1 * z.exp();
        let partial = (&id - q.pow((data.horizon() + 1) as u32)) * (&id - &q).try_inverse().unwrap();
        let diff = (data.t_of(z) - &partial).norm() / partial.norm();
        assert!(diff < 1e-13, "{diff}");
    }
    let worst = data.check_grid(16).unwrap().iter().map(|c| c.residual).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
    let untruncated = TowerOperator::binned(pm_basis().clone(), 50, 200, 1.1).unwrap();
    assert!(renewal_build(&untruncated, &roof, 10).is_err());
}

#[test]
fn decomposition_identity_and_support() {
    let basis = Arc::new(CylinderBasis::new(pm_induced(0.5, 2000), 25, 1, 0).unwrap());
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let op = TowerOperator::truncated(basis, 20).unwrap().twisted(&roof, C64::new(0.01, 3.0));
    for n in [1, 15, 21] {
        let rep = tower_operator_decomposition(&op, n, 0.01, &roof).unwrap();
        assert!(rep.residual <= 1e-8, "n = {n}: {}", rep.residual);
        assert!(rep.vanish_beyond);
        assert_eq!(rep.e_norms[21], 0.0);
        assert!(rep.c_a.is_finite() && rep.c_b.is_finite() && rep.c_e.is_finite());
    }
    // single-level tower: nothing escapes the base
    let flat = TowerOperator::truncated(doubling(3), 1).unwrap().twisted(&roof, C64::new(0.0, 1.0));
    let rep = tower_operator_decomposition(&flat, 1, 0.01, &roof).unwrap();
    assert!(rep.residual < 1e-14);
    assert!(rep.e_norms.iter().all(|&x| x == 0.0));
    assert!(tower_operator_decomposition(&flat, 0, 0.01, &roof).is_err());
}

/// `ρ̂(s)` for `v = w = x - 1/2` on the doubling map with unit roof, summed in
/// closed form: the in-column double integral plus a geometric series in
/// `e^{-s}/2`.
fn doubling_unit_roof_laplace(s: C64) -> C64 {
    let e = (-s).exp();
    let inner = (1.0 / s - (1.0 - e) / (s * s)) / 12.0;
    let q = e / 2.0;
    inner + (s.exp() - 1.0) * (1.0 - e) / (s * s) / 12.0 * q / (1.0 - q)
}

#[test]
fn laplace_series_matches_closed_form_for_unit_roof() {
    let op = TowerOperator::truncated(doubling(12), 1).unwrap();
    let roof = Roof::constant(1.0).unwrap();
    let v = Observable::Coordinate { center: 0.5 };
    let s = C64::new(0.5, 0.0);
    let got = laplace_series(&op, &roof, &v, &v, s, 10_000).unwrap();
    let want = doubling_unit_roof_laplace(s);
    assert!((got.value - want).norm() < 1e-6, "{} vs {want}", got.value);
    // flow-direction cosine: ρ(t) = cos(2πt)/2 exactly
    let c = Observable::FlowCosine { freq: 1.0 };
    let s = C64::new(0.3, 2.0);
    let got = laplace_series(&TowerOperator::truncated(doubling(5), 1).unwrap(), &roof, &c, &c, s, 10_000).unwrap();
    let want = 0.5 * s / (s * s + TAU * TAU);
    assert!((got.value - want).norm() < 1e-10, "{} vs {want}", got.value);
}

#[test]
fn laplace_series_of_constant_observable_vanishes() {
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let one = Observable::Constant(1.0);
    let w = Observable::Coordinate { center: 0.5 };
    let s = C64::new(0.3, 2.0);
    let flat = TowerOperator::truncated(doubling(6), 1).unwrap();
    let got = laplace_series(&flat, &roof, &one, &w, s, 10_000).unwrap();
    assert!(got.value.norm() < 1e-14, "{}", got.value);
    // on the truncated PM tower only the leaf averaging of the twist is left
    let op = TowerOperator::truncated(pm_basis().clone(), 30).unwrap();
    let got = laplace_series(&op, &roof, &one, &w, s, 10_000).unwrap();
    let reference = laplace_series(&op, &roof, &w, &w, s, 10_000).unwrap();
    assert!(got.value.norm() < 0.02 * reference.value.norm(), "{} vs {}", got.value, reference.value);
    assert!(laplace_series(&op, &roof, &one, &w, C64::new(0.0, 0.0), 10).is_err());
}

#[test]
fn laplace_series_agrees_with_monte_carlo() {
    let ind = pm_induced(0.5, 2000);
    let basis = Arc::new(CylinderBasis::new(ind.clone(), 40, 3, 4).unwrap());
    let op = TowerOperator::truncated(basis, 30).unwrap();
    let roof = Roof::cosine(2.0, 1.0).unwrap();
    let v = Observable::Coordinate { center: 0.5 };
    let s = C64::new(0.3, 2.0);
    let series = laplace_series(&op, &roof, &v, &v, s, 10_000).unwrap();
    let tower = Tower::with_default_theta(ind).unwrap();
    let sys = FlowSystem::new(tower, roof).unwrap().with_return_truncation(30);
    let mc = laplace_mc(&sys, &v, &v, s, 60.0, 60, 50_000, 11).unwrap();
    let gap = (series.value - mc.value).norm();
    assert!(gap <= 3.0 * mc.stderr, "{} vs {} (se {})", series.value, mc.value, mc.stderr);
}

#[test]
fn doubling_map_correlations_match_exact_sums() {
    let depth = 6;
    let op = TowerOperator::truncated(doubling(depth), 1).unwrap();
    let cells = 1usize << depth;
    let step = move |x: f64| ((x * cells as f64).floor() + 0.5) / cells as f64 - 0.5;
    let corr = map_correlation_operator(&op, step, step, 8);
    for n in 0..=8usize {
        // v and v∘T^n are constant on cells of width 2^{-(depth+n)}
        let fine = cells << n;
        let exact: f64 = (0..fine)
            .map(|i| {
                let x = (i as f64 + 0.5) / fine as f64;
                let tx = (x * (1usize << n) as f64).fract();
                step(x) * step(tx)
            })
            .sum::<f64>()
            / fine as f64;
        assert!((corr.corr[n] - exact).abs() < 1e-12, "n = {n}: {} vs {exact}", corr.corr[n]);
    }
    let zero = map_correlation_operator(&op, |_| 1.0, step, 5);
    assert!(zero.corr.iter().all(|c| c.abs() < 1e-15));
    assert_eq!(corr.as_series().t.len(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn r_is_stochastic_for_any_partial_refinement(cutoff in 3usize..40, depth in 1usize..4, refine in 0usize..4) {
        let basis = CylinderBasis::new(pm_induced(0.5, 400), cutoff, depth, refine).unwrap();
        let r = assemble_r(&basis, basis.induced()).unwrap();
        prop_assert!(r.row_sum_defect() < 1e-10);
        prop_assert!(r.min_entry_re() >= 0.0);
        prop_assert!((basis.total_weight() - basis.induced().represented_mass() - basis.induced().tail_mass()).abs() < 1e-10);
    }

    #[test]
    fn seminorm_ignores_constants_and_scales(shift_re in -3.0f64..3.0, shift_im in -3.0f64..3.0, scale in 0.1f64..10.0, seed in 0u64..1000) {
        let basis = pm_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_values(basis.len(), &mut rng);
        let shift = C64::new(shift_re, shift_im);
        let moved: Vec<C64> = v.iter().map(|x| x * scale + shift).collect();
        let (a, b) = (basis.seminorm(&v), basis.seminorm(&moved));
        prop_assert!((b - scale * a).abs() <= 1e-9 * b.max(1.0));
        let norm = BNorm { c: 0.5, b: 10.0 };
        prop_assert!(norm.eval(basis, &v) >= basis.sup_norm(&v));
    }
}

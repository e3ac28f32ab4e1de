//! Desk-scale reproduction suite: eleven pass/fail checks, each built from the
//! library's own experiments at fixed sizes and seeds.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::{InducedMap, MapModel, TailFit};
use crate::roof::{Observable, Roof};
use crate::suspension::{
    correlation_mc, ekk_measure, fit_decay, roof_truncation_experiment, truncation_error_experiment, FlowSystem,
};
use crate::tower::Tower;
use crate::transfer::{
    dn_growth_check, lasota_yorke_check, map_correlation_operator, rate_budget, renewal_build, resolvent_scan,
    tower_operator_decomposition, budget_constraints, ColumnConstantExample, CylinderBasis, DnClass, ProbeOptions,
    Schedule, TailData, TowerOperator,
};

pub const TITLES: [&str; 11] = [
    "tail exponent",
    "map-level decay",
    "truncation measure identities",
    "truncation error",
    "renewal equation",
    "operator decomposition",
    "Lasota-Yorke uniformity",
    "resonance contrast",
    "mixing contrast",
    "rate budget",
    "determinism",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptanceOptions {
    /// Monte Carlo samples for the flow-level checks.
    pub mc_samples: usize,
    pub seed: u64,
    /// Worker counts compared by the determinism check.
    pub threads: (usize, usize),
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self { mc_samples: 1_000_000, seed: 7, threads: (1, 4) }
    }
}

/// Result of one check. `bits` records every number the verdict depends on.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    pub bits: Vec<u64>,
}

impl Outcome {
    pub fn title(&self) -> &'static str {
        TITLES[self.id - 1]
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} ({:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title(),
            self.detail,
            self.seconds
        )
    }
}

struct Check {
    pass: bool,
    detail: String,
    bits: Vec<u64>,
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn pm_induced(alpha: f64, cells: usize) -> Result<Arc<InducedMap<f64>>> {
    Ok(Arc::new(InducedMap::induce(&MapModel::pomeau_manneville(alpha)?, (0.5, 1.0), cells)?))
}

fn doubling_induced() -> Result<Arc<InducedMap<f64>>> {
    Ok(Arc::new(InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2)?))
}

fn doubling_flow(roof: Roof) -> Result<FlowSystem> {
    FlowSystem::new(Tower::with_default_theta(doubling_induced()?)?, roof)
}

fn tail_exponent() -> Result<Check> {
    let ind = pm_induced(0.5, 10_000)?;
    match ind.fit_tail_exponent(100, 10_000, false)? {
        TailFit::PowerLaw(f) => Ok(Check {
            pass: (1.85..=2.15).contains(&f.exponent),
            detail: format!("fitted β+1 = {:.4} on [1e2, 1e4], want [1.85, 2.15]", f.exponent),
            bits: bits(&[f.exponent, f.prefactor]),
        }),
        TailFit::ExponentialTail => Ok(Check { pass: false, detail: "no power tail on the window".into(), bits: vec![] }),
    }
}

fn map_decay() -> Result<Check> {
    let basis = Arc::new(CylinderBasis::new(pm_induced(0.6, 5000)?, 400, 2, 2)?);
    let op = TowerOperator::binned(basis, 1000, 20_000, 1.02)?;
    let corr = map_correlation_operator(&op, |x| x, |x| x, 500);
    let fit = fit_decay(&corr.as_series(), (10.0, 500.0), false)?;
    let want = 1.0 / 0.6 - 1.0;
    Ok(Check {
        pass: (fit.exponent - want).abs() <= 0.25,
        detail: format!("fitted exponent {:.4} on n ∈ [10, 500], want {want:.4} ± 0.25", fit.exponent),
        bits: bits(&corr.corr),
    })
}

fn measure_identities() -> Result<Check> {
    let tower = Tower::with_default_theta(pm_induced(0.5, 400)?)?;
    let mut worst = 0.0f64;
    let mut ek_ok = true;
    let mut out = Vec::new();
    for n in [10, 20, 50, 100] {
        let tt = tower.truncate(n)?;
        worst = worst.max(tt.identities().max_error());
        for k in [1, 5, 10] {
            let e = tt.ek_measure(k)?;
            ek_ok &= e.holds();
            out.extend([e.measured, e.bound]);
        }
    }
    let sys = doubling_flow(Roof::singular(1.0)?)?;
    let mut ekk_ok = true;
    for (n, k) in [(10.0, 1.0), (10.0, 5.0), (20.0, 5.0), (40.0, 10.0)] {
        let m = ekk_measure(&sys, n, k, 1_000_000)?;
        ekk_ok &= m.measured <= m.bound;
        out.extend([m.measured, m.bound]);
    }
    out.push(worst);
    Ok(Check {
        pass: worst <= 1e-12 && ek_ok && ekk_ok,
        detail: format!("identity error {worst:.1e} (≤ 1e-12), E_k bounds {ek_ok}, roof E_k bounds {ekk_ok}"),
        bits: bits(&out),
    })
}

fn truncation_error(opts: &AcceptanceOptions) -> Result<Check> {
    let pm = FlowSystem::new(Tower::with_default_theta(pm_induced(0.5, 100_000)?)?, Roof::cosine(2.0, 1.0)?)?;
    let grid = [5.0, 10.0, 20.0];
    let v = Observable::Coordinate { center: 0.5 };
    let a = truncation_error_experiment(&pm, &v, &v, &[10, 20, 40], &grid, opts.mc_samples, opts.seed)?;
    let sys = doubling_flow(Roof::singular(1.0)?)?;
    let c = Observable::Cosine { freq: 1.0 };
    let b = roof_truncation_experiment(&sys, &c, &c, &[10, 20, 40], &grid, 2.0, opts.mc_samples, opts.seed)?;
    let out: Vec<f64> = a.rows.iter().chain(&b.rows).map(|r| r.diff).collect();
    Ok(Check {
        pass: a.holds() && a.stability() <= 3.0 && b.holds() && b.stability() <= 3.0,
        detail: format!(
            "bounded roof C = {:.3e} stable within {:.2}, unbounded roof C = {:.3e} stable within {:.2} (limit 3)",
            a.c_fit,
            a.stability(),
            b.c_fit,
            b.stability()
        ),
        bits: bits(&out),
    })
}

fn renewal() -> Result<Check> {
    let basis = Arc::new(CylinderBasis::new(pm_induced(0.5, 2000)?, 40, 2, 2)?);
    let op = TowerOperator::truncated(basis, 30)?;
    let roof = Roof::cosine(2.0, 1.0)?;
    let mut worst = 0.0f64;
    let mut out = Vec::new();
    for s in [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.1), Complex64::new(0.3, 2.0)] {
        let data = renewal_build(&op.twisted(&roof, s), &roof, 5000)?;
        for c in data.check_grid(16)? {
            worst = worst.max(c.residual);
            out.push(c.residual);
        }
    }
    Ok(Check { pass: worst <= 1e-8, detail: format!("worst relative residual {worst:.2e} at 48 points (≤ 1e-8)"), bits: bits(&out) })
}

fn decomposition() -> Result<Check> {
    let basis = Arc::new(CylinderBasis::new(pm_induced(0.5, 2000)?, 25, 1, 0)?);
    let roof = Roof::cosine(2.0, 1.0)?;
    let op = TowerOperator::truncated(basis, 20)?.twisted(&roof, Complex64::new(0.01, 3.0));
    let mut worst = 0.0f64;
    let mut vanish = true;
    let mut out = Vec::new();
    for n in [1, 5, 15, 21] {
        let rep = tower_operator_decomposition(&op, n, 0.01, &roof)?;
        worst = worst.max(rep.residual);
        vanish &= rep.vanish_beyond;
        out.extend([rep.residual, rep.c_a, rep.c_b, rep.c_e]);
    }
    Ok(Check {
        pass: worst <= 1e-8 && vanish,
        detail: format!("worst residual {worst:.2e} (≤ 1e-8), A/B/E vanish beyond N: {vanish}"),
        bits: bits(&out),
    })
}

fn lasota_yorke() -> Result<Check> {
    let basis = CylinderBasis::new(pm_induced(0.5, 2000)?, 110, 2, 3)?;
    let roof = Roof::cosine(2.0, 1.0)?;
    let rep = lasota_yorke_check(&basis, basis.induced(), &roof, &[20, 50, 100], &[2.0, 10.0, 50.0], &[0.0, 1.0], 20, 20, 1)?;
    let out: Vec<f64> = rep.per_level.iter().map(|p| p.1).collect();
    Ok(Check {
        pass: rep.constant_ok && rep.stability <= 2.0,
        detail: format!("C = {:.4}, per-N constants stable within {:.3} (limit 2)", rep.c, rep.stability),
        bits: bits(&out),
    })
}

fn resonance() -> Result<Check> {
    let ind = doubling_induced()?;
    let coarse = CylinderBasis::new(ind.clone(), 2, 6, 2)?;
    let mut grid = vec![1.5];
    for k in 1..=15 {
        grid.extend([k as f64 * TAU, k as f64 * TAU + 1.3]);
    }
    let opts = ProbeOptions { random: 60, adversarial: 5, seed: 4 };
    let flat = resolvent_scan(&coarse, &ind, &Roof::constant(1.0)?, &grid, &[0.0], None, 2.6, opts)?;
    let mut lattice_ok = true;
    let mut worst_residual = 0.0f64;
    for row in &flat.rows {
        let on = (row.b / TAU - (row.b / TAU).round()).abs() < 1e-12;
        lattice_ok &= row.resonance == on;
        if row.resonance {
            worst_residual = worst_residual.max(row.residual);
        }
    }
    let fine = CylinderBasis::new(ind.clone(), 2, 9, 2)?;
    let b_grid: Vec<f64> = (0..10).map(|i| 100f64.powf(i as f64 / 9.0)).collect();
    let pert = resolvent_scan(&fine, &ind, &Roof::cosine(2.0, 1.0)?, &b_grid, &[0.0], None, 2.6, opts)?;
    let alpha = pert.alpha_fit.unwrap_or(f64::NAN);
    let mut out: Vec<f64> = flat.rows.iter().chain(&pert.rows).map(|r| r.norm.min(f64::MAX)).collect();
    out.push(alpha);
    Ok(Check {
        pass: lattice_ok && worst_residual < 1e-12 && pert.flagged().is_empty() && alpha.is_finite(),
        detail: format!(
            "constant roof flags exactly 2πℤ: {lattice_ok} (eigen residual {worst_residual:.1e}); perturbed roof flags {}, fitted growth b^{alpha:.3}",
            pert.flagged().len()
        ),
        bits: bits(&out),
    })
}

fn mixing(opts: &AcceptanceOptions) -> Result<Check> {
    let grid = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0];
    let u = Observable::FlowCosine { freq: 1.0 };
    let flat = correlation_mc(&doubling_flow(Roof::constant(1.0)?)?, &u, &u, &grid, opts.mc_samples, opts.seed)?;
    let r0 = flat.rho[0];
    let persists = flat.rho.iter().all(|r| (r.abs() - r0.abs()).abs() <= 0.1 * r0.abs());
    let v = Observable::Coordinate { center: 0.5 };
    let pert = correlation_mc(&doubling_flow(Roof::cosine(2.0, 1.0)?)?, &v, &v, &grid, opts.mc_samples, opts.seed)?;
    let last = pert.rho[grid.len() - 1];
    let mut out = flat.rho.clone();
    out.extend(&pert.rho);
    Ok(Check {
        pass: persists && last.abs() < 0.01,
        detail: format!("constant roof |ρ(k)|/|ρ(0)| within 10%: {persists}; perturbed |ρ(20)| = {:.2e} (< 0.01)", last.abs()),
        bits: bits(&out),
    })
}

fn budget() -> Result<Check> {
    let (beta, gamma, p, d, eps) = (1.0, 2.0, 3.0, 0.1, 0.1);
    let tail = TailData::power_law(beta, gamma, 2000)?;
    let q = 1.2 * budget_constraints(beta, gamma, p, d, 1.0, eps, Schedule::Bounded).q_min;
    let b = rate_budget(&tail, p, d, q, eps, Schedule::Bounded, (1e3, 1e120), 60)?;
    let upper = &b.rows[b.rows.len() / 2..];
    let dom = upper[upper.len() - 1].dominant;
    let dominant_same = upper.iter().all(|r| r.dominant == dom);
    let (ex, lg) = b.term_fits[dom];
    let rate_ok = dominant_same && (ex - 1.0).abs() < 0.01 && (lg - 2.0).abs() < 0.2;
    let mut out = vec![ex, lg];
    let mut classes_ok = true;
    for (beta, gamma) in [(0.5, 0.0), (1.0, 0.0), (2.0, 0.0)] {
        let chk = dn_growth_check(&TailData::power_law(beta, gamma, 1000)?, 1e2, 1e14, 25);
        classes_ok &= chk.class == DnClass::classify(beta, gamma) && chk.nondecreasing && chk.spread < 1.1;
        out.push(chk.spread);
    }
    let mut yn_ok = true;
    let mut gaps = Vec::new();
    for beta in [0.5, 1.0, 2.0] {
        let r = ColumnConstantExample::new(beta)?.report(10.0, 1e12, 40)?;
        // bounded by the tail profile, which overshoots by a decaying log factor
        yn_ok &= r.bound_constant < 1.0 && r.bound_ratio_decay < 1e-6 && r.gap_constant < 2.0;
        gaps.push(r.gap_constant);
        out.extend([r.bound_constant, r.gap_constant]);
    }
    Ok(Check {
        pass: rate_ok && classes_ok && yn_ok,
        detail: format!(
            "dominant term {} fits t^-{ex:.4} (ln t)^{lg:.3}; d_N classes {classes_ok}; Y(n) bound respected {yn_ok} (sharp-profile constants {:.2?})",
            dom + 1,
            gaps
        ),
        bits: bits(&out),
    })
}

fn run_check(id: usize, opts: &AcceptanceOptions) -> Result<Check> {
    match id {
        1 => tail_exponent(),
        2 => map_decay(),
        3 => measure_identities(),
        4 => truncation_error(opts),
        5 => renewal(),
        6 => decomposition(),
        7 => lasota_yorke(),
        8 => resonance(),
        9 => mixing(opts),
        10 => budget(),
        _ => Err(Error::Parameter(format!("no criterion {id}"))),
    }
}

fn timed(id: usize, opts: &AcceptanceOptions) -> Outcome {
    let start = Instant::now();
    let (pass, detail, bits) = match run_check(id, opts) {
        Ok(c) => (c.pass, c.detail, c.bits),
        Err(e) => (false, format!("error: {e}"), Vec::new()),
    };
    Outcome { id, pass, detail, seconds: start.elapsed().as_secs_f64(), bits }
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs criterion `id` (1 to 10) on a pool with `opts.threads.0` workers.
pub fn run_criterion(id: usize, opts: &AcceptanceOptions) -> Result<Outcome> {
    if !(1..=10).contains(&id) {
        return Err(Error::Parameter(format!("criterion must be in 1..=10, got {id}")));
    }
    in_pool(opts.threads.0, || timed(id, opts))
}

/// Reruns the given outcomes on `opts.threads.1` workers and compares every
/// recorded number bit for bit.
pub fn determinism(first: &[Outcome], opts: &AcceptanceOptions) -> Result<Outcome> {
    let start = Instant::now();
    let mut differing = Vec::new();
    for o in first {
        let again = in_pool(opts.threads.1, || timed(o.id, opts))?;
        if again.bits != o.bits || again.bits.is_empty() {
            differing.push(o.id);
        }
    }
    let detail = if differing.is_empty() {
        let ids: Vec<usize> = first.iter().map(|o| o.id).collect();
        format!("criteria {ids:?} bit-identical on {} and {} threads", opts.threads.0, opts.threads.1)
    } else {
        format!("criteria {differing:?} differ between {} and {} threads", opts.threads.0, opts.threads.1)
    };
    Ok(Outcome {
        id: 11,
        pass: differing.is_empty() && !first.is_empty(),
        detail,
        seconds: start.elapsed().as_secs_f64(),
        bits: Vec::new(),
    })
}

/// The selected criteria in order, calling `report` as each one finishes.
/// Criterion 11 reruns the others that were selected.
pub fn run_suite(opts: &AcceptanceOptions, ids: &[usize], mut report: impl FnMut(&Outcome)) -> Result<Vec<Outcome>> {
    if let Some(bad) = ids.iter().find(|&&i| !(1..=11).contains(&i)) {
        return Err(Error::Parameter(format!("criterion must be in 1..=11, got {bad}")));
    }
    let mut out = Vec::with_capacity(ids.len());
    for id in 1..=10 {
        if ids.contains(&id) {
            let o = run_criterion(id, opts)?;
            report(&o);
            out.push(o);
        }
    }
    if ids.contains(&11) {
        let d = determinism(&out, opts)?;
        report(&d);
        out.push(d);
    }
    Ok(out)
}

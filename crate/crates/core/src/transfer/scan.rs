use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::fit::fit_power_law;
use crate::maps::InducedMap;
use crate::roof::Roof;

use super::basis::CylinderBasis;
use super::operator::{assemble_twisted, forward_sum, OperatorMatrix, ZERO};

type C64 = Complex64;

/// Domain descriptor for the unit ball `U_b = {‖v‖_b ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BNorm {
    /// Lasota–Yorke constant.
    pub c: f64,
    pub b: f64,
}

impl BNorm {
    pub fn eval(&self, basis: &CylinderBasis, v: &[C64]) -> f64 {
        basis.b_norm(v, self.c, self.b)
    }

    pub fn contains(&self, basis: &CylinderBasis, v: &[C64]) -> bool {
        self.eval(basis, v) <= 1.0
    }
}

/// Probe counts for operator norm estimates in `‖·‖_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeOptions {
    pub random: usize,
    pub adversarial: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { random: 200, adversarial: 5, seed: 0 }
    }
}

/// Random test functions: half smooth trigonometric polynomials, half
/// independent leaf values.
pub fn random_probes(basis: &CylinderBasis, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i % 2 == 0 {
                let coeffs: Vec<C64> = (0..7)
                    .map(|k| {
                        let z = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                        z / ((1 + k) * (1 + k)) as f64
                    })
                    .collect();
                basis.project(|x| {
                    coeffs.iter().enumerate().map(|(k, c)| c * C64::from_polar(1.0, TAU * k as f64 * x)).sum()
                })
            } else {
                (0..basis.len())
                    .map(|_| C64::from_polar(rng.random::<f64>().sqrt(), TAU * rng.random::<f64>()))
                    .collect()
            }
        })
        .collect()
}

fn mat_apply(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let x = nalgebra::DVector::from_column_slice(v);
    (m * x).iter().copied().collect()
}

/// Lower estimate of the `‖·‖_b` operator norm of `m`: basis probes, random
/// probes, and power iterates started from the best of them.
pub fn operator_b_norm(basis: &CylinderBasis, m: &DMatrix<C64>, norm: BNorm, opts: ProbeOptions) -> f64 {
    let n = basis.len();
    let ratio = |p: &[C64]| {
        let den = norm.eval(basis, p);
        if den == 0.0 {
            return (0.0, Vec::new());
        }
        let img = mat_apply(m, p);
        (norm.eval(basis, &img) / den, img)
    };
    let unit: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![ZERO; n];
            e[i] = C64::new(1.0, 0.0);
            let col: Vec<C64> = m.column(i).iter().copied().collect();
            norm.eval(basis, &col) / norm.eval(basis, &e)
        })
        .collect();
    let mut best = unit.iter().copied().fold(0.0, f64::max);
    let mut best_probe: Vec<C64> = {
        let i = unit.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |p| p.0);
        let mut e = vec![ZERO; n];
        e[i] = C64::new(1.0, 0.0);
        e
    };
    let probes = random_probes(basis, opts.random, opts.seed);
    let scores: Vec<f64> = probes.par_iter().map(|p| ratio(p).0).collect();
    for (p, &r) in probes.iter().zip(&scores) {
        if r > best {
            best = r;
            best_probe = p.clone();
        }
    }
    let mut p = best_probe;
    for _ in 0..opts.adversarial {
        let (r, img) = ratio(&p);
        if img.is_empty() {
            break;
        }
        best = best.max(r);
        let scale = norm.eval(basis, &img);
        if scale == 0.0 {
            break;
        }
        p = img.into_iter().map(|x| x / scale).collect();
    }
    best
}

/// One `(N, b, ω)` cell of the Lasota–Yorke scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LasotaYorkeRow {
    pub n_trunc: usize,
    pub b: f64,
    pub omega: f64,
    /// `max |R^n v|_θ / (|b| |v|_∞ + θ^n |v|_θ)` over probes and `1 ≤ n ≤ n_max`.
    pub c_needed: f64,
    /// `max_v |R^n v|_θ / |v|_θ` for each `n`, non-constant probes only.
    pub contraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LasotaYorkeReport {
    pub rows: Vec<LasotaYorkeRow>,
    /// Smallest constant per truncation level.
    pub per_level: Vec<(usize, f64)>,
    /// Single constant for the whole grid.
    pub c: f64,
    /// Largest over smallest per-level constant.
    pub stability: f64,
    /// The constant probe satisfies the bound with `c`.
    pub constant_ok: bool,
}

/// `|R_{ib,iω}^n v|_θ ≤ C {|b| |v|_∞ + θ^n |v|_θ}` with one fitted `C` over
/// the `(N, b, ω, n)` grid.
#[allow(clippy::too_many_arguments)]
pub fn lasota_yorke_check(
    basis: &CylinderBasis,
    ind: &InducedMap<f64>,
    roof: &Roof,
    levels: &[usize],
    b_list: &[f64],
    omega_list: &[f64],
    n_max: usize,
    n_probes: usize,
    seed: u64,
) -> Result<LasotaYorkeReport> {
    if let Some(b) = b_list.iter().find(|b| b.abs() <= 1.0) {
        return Err(Error::Parameter(format!("the estimate is stated for |b| > 1, got b = {b}")));
    }
    if levels.is_empty() || n_max == 0 {
        return Err(Error::Parameter("need at least one truncation level and n_max ≥ 1".into()));
    }
    let theta = basis.theta();
    let mut probes = random_probes(basis, n_probes, seed);
    probes.push(vec![C64::new(1.0, 0.0); basis.len()]);
    let grid: Vec<(usize, f64, f64)> = levels
        .iter()
        .flat_map(|&n| b_list.iter().flat_map(move |&b| omega_list.iter().map(move |&w| (n, b, w))))
        .collect();
    let rows: Vec<LasotaYorkeRow> = grid
        .par_iter()
        .map(|&(n_trunc, b, omega)| -> Result<LasotaYorkeRow> {
            let op = assemble_twisted(basis, ind, roof, C64::new(0.0, b), C64::new(0.0, omega), Some(n_trunc))?;
            let mut c_needed = 0.0f64;
            let mut contraction = vec![0.0f64; n_max];
            for v in &probes {
                let sup = basis.sup_norm(v);
                let semi = basis.seminorm(v);
                let mut w = v.clone();
                for n in 1..=n_max {
                    w = op.apply(&w);
                    let lhs = basis.seminorm(&w);
                    let rhs = b.abs() * sup + theta.powi(n as i32) * semi;
                    if rhs > 0.0 {
                        c_needed = c_needed.max(lhs / rhs);
                    }
                    if semi > 0.0 {
                        contraction[n - 1] = contraction[n - 1].max(lhs / semi);
                    }
                }
            }
            Ok(LasotaYorkeRow { n_trunc, b, omega, c_needed, contraction })
        })
        .collect::<Result<_>>()?;
    let per_level: Vec<(usize, f64)> = levels
        .iter()
        .map(|&n| (n, rows.iter().filter(|r| r.n_trunc == n).map(|r| r.c_needed).fold(0.0, f64::max)))
        .collect();
    let c = per_level.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = per_level.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let stability = if lo > 0.0 { c / lo } else { f64::INFINITY };
    let constant_ok = rows.iter().all(|r| r.c_needed <= c);
    Ok(LasotaYorkeReport { rows, per_level, c, stability, constant_ok })
}

/// One grid point of a resolvent scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventRow {
    pub b: f64,
    pub omega: f64,
    /// Lower estimate of `‖(I - R_{ib,iω})^{-1}‖_b`; infinite when flagged.
    pub norm: f64,
    pub resonance: bool,
    /// Smallest singular value of `I - R_{ib,iω}`.
    pub min_singular: f64,
    /// `‖(I - R_{ib,iω}) u‖_∞` for the near-kernel vector `u`, `|u|_∞ = 1`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventScan {
    pub rows: Vec<ResolventRow>,
    /// Fitted growth `norm ≈ A b^α` over unflagged rows with `b > 1`.
    pub alpha_fit: Option<f64>,
    pub c: f64,
}

impl ResolventScan {
    pub fn flagged(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.resonance).map(|r| r.b).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["b", "omega", "norm_estimate", "resonance_flag", "alpha_fit"])?;
        let alpha = self.alpha_fit.map_or(String::new(), |a| a.to_string());
        for r in &self.rows {
            w.write_record([
                r.b.to_string(),
                r.omega.to_string(),
                r.norm.to_string(),
                (r.resonance as u8).to_string(),
                alpha.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Relative size of the smallest singular value below which `1` counts as an
/// eigenvalue of the discretized twisted operator.
pub const RESONANCE_TOL: f64 = 1e-9;

/// Largest singular value of `m` and its right singular vector, by power
/// iteration on `m^H m`.
fn top_singular(m: &DMatrix<C64>, iters: usize) -> (f64, Vec<C64>) {
    let n = m.ncols();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1));
    v /= C64::new(v.norm(), 0.0);
    let mh = m.adjoint();
    let mut sigma = 0.0;
    for _ in 0..iters {
        let w = &mh * (m * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return (0.0, v.iter().copied().collect());
        }
        sigma = nw.sqrt();
        v = w / C64::new(nw, 0.0);
    }
    (sigma, v.iter().copied().collect())
}

/// `‖(I - R_{ib,iω})^{-1}‖_b` over a `(b, ω)` grid.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_scan(
    basis: &CylinderBasis,
    ind: &InducedMap<f64>,
    roof: &Roof,
    b_grid: &[f64],
    omega_grid: &[f64],
    n_trunc: Option<usize>,
    c: f64,
    opts: ProbeOptions,
) -> Result<ResolventScan> {
    let grid: Vec<(f64, f64)> = b_grid.iter().flat_map(|&b| omega_grid.iter().map(move |&w| (b, w))).collect();
    let rows: Vec<ResolventRow> = grid
        .par_iter()
        .map(|&(b, omega)| -> Result<ResolventRow> {
            let op = assemble_twisted(basis, ind, roof, C64::new(0.0, b), C64::new(0.0, omega), n_trunc)?;
            resolvent_point(basis, &op, b, omega, c, opts)
        })
        .collect::<Result<_>>()?;
    let fit_pts: Vec<(f64, f64)> = b_grid
        .iter()
        .filter(|&&b| b > 1.0)
        .filter_map(|&b| {
            let at: Vec<&ResolventRow> = rows.iter().filter(|r| r.b == b).collect();
            (!at.iter().any(|r| r.resonance)).then(|| (b, at.iter().map(|r| r.norm).fold(0.0, f64::max)))
        })
        .collect();
    let alpha_fit = if fit_pts.len() >= 3 {
        let xs: Vec<f64> = fit_pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_pts.iter().map(|p| p.1).collect();
        fit_power_law(&xs, &ys, false).ok().map(|f| -f.exponent)
    } else {
        None
    };
    Ok(ResolventScan { rows, alpha_fit, c })
}

fn resolvent_point(
    basis: &CylinderBasis,
    op: &OperatorMatrix,
    b: f64,
    omega: f64,
    c: f64,
    opts: ProbeOptions,
) -> Result<ResolventRow> {
    let n = op.dim();
    let m = DMatrix::<C64>::identity(n, n) - &op.mat;
    let scale = m.norm().max(1.0);
    let near_kernel = |m: &DMatrix<C64>| {
        let (_, u) = top_singular(&m.adjoint(), 1);
        u
    };
    let flagged = |u: Vec<C64>| {
        let sup = u.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let u: Vec<C64> = u.iter().map(|x| x / sup).collect();
        let r = mat_apply(&m, &u);
        let residual = r.iter().map(|x| x.norm()).fold(0.0, f64::max);
        ResolventRow { b, omega, norm: f64::INFINITY, resonance: true, min_singular: 0.0, residual }
    };
    let Some(inv) = m.clone().lu().try_inverse() else {
        return Ok(flagged(near_kernel(&m)));
    };
    let (s_inv, u) = top_singular(&inv, 60);
    let min_singular = 1.0 / s_inv;
    if !inv.iter().all(|x| x.is_finite()) || min_singular < RESONANCE_TOL * scale {
        let mut row = flagged(u);
        row.min_singular = if min_singular.is_finite() { min_singular } else { 0.0 };
        return Ok(row);
    }
    let norm = operator_b_norm(basis, &inv, BNorm { c, b }, opts);
    let residual = {
        let sup = u.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let u: Vec<C64> = u.iter().map(|x| x / sup).collect();
        mat_apply(&m, &u).iter().map(|x| x.norm()).fold(0.0, f64::max)
    };
    Ok(ResolventRow { b, omega, norm, resonance: false, min_singular, residual })
}

/// Size of `R_{s,z} - R_{ib,iω}` against the shape of its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistPerturbation {
    pub s: C64,
    pub z: C64,
    pub n_trunc: usize,
    /// Lower estimate of `‖R_{s,z} - R_{ib,iω}‖_b`.
    pub difference: f64,
    /// `d_N = Σ_{k ≤ N} k μ_Y(r ≥ k)`.
    pub d_n: f64,
    /// `d_N (|a| + |σ|) e^{(|a| |h|_∞ + |σ|) N}` for bounded roofs,
    /// `d_N (|a| + |σ|) e^{(|a| N + |σ|) ln N}` otherwise.
    pub shape: f64,
    /// `difference / shape`.
    pub c_fit: f64,
}

pub(crate) fn tail_sum(ind: &InducedMap<f64>, n: usize) -> f64 {
    (1..=n).map(|k| k as f64 * ind.return_time_tail(k - 1).total).sum()
}

#[allow(clippy::too_many_arguments)]
pub fn twist_perturbation_check(
    basis: &CylinderBasis,
    ind: &InducedMap<f64>,
    roof: &Roof,
    s: C64,
    z: C64,
    n_trunc: usize,
    c: f64,
    opts: ProbeOptions,
) -> Result<TwistPerturbation> {
    let full = assemble_twisted(basis, ind, roof, s, z, Some(n_trunc))?;
    let flat = assemble_twisted(basis, ind, roof, C64::new(0.0, s.im), C64::new(0.0, z.im), Some(n_trunc))?;
    let diff = &full.mat - &flat.mat;
    let difference = if diff.iter().all(|x| *x == ZERO) {
        0.0
    } else {
        operator_b_norm(basis, &diff, BNorm { c, b: s.im.abs().max(1.0) }, opts)
    };
    let d_n = tail_sum(ind, n_trunc);
    let (a, sigma) = (s.re.abs(), z.re.abs());
    let nf = n_trunc as f64;
    let growth = if roof.is_bounded() { (a * roof.sup() + sigma) * nf } else { (a * nf + sigma) * nf.ln() };
    let shape = d_n * (a + sigma) * growth.exp();
    let c_fit = if shape > 0.0 { difference / shape } else { 0.0 };
    Ok(TwistPerturbation { s, z, n_trunc, difference, d_n, shape, c_fit })
}

/// Both sides of `Σ_j |1_{Y_j} H'|_θ μ_Y(Y_j) ≤ |h|_θ r̄`, estimated over
/// sampled pairs in each partition element.
#[derive(Debug, Clone, PartialEq)]
pub struct RoofHolderSum {
    /// `|1_{Y_j} H'|_θ` per sampled cell.
    pub per_cell: Vec<f64>,
    pub lhs: f64,
    /// `|h|_θ` over the same pairs lifted to every tower level.
    pub h_theta: f64,
    pub r_bar: f64,
    pub holds: bool,
}

/// Separation time under `F`, capped at `cap`.
fn separation_time(ind: &InducedMap<f64>, mut x: f64, mut y: f64, cap: usize) -> usize {
    let mut s = 0;
    while s < cap {
        let (Ok(Some(jx)), Ok(Some(jy))) = (ind.locate(x), ind.locate(y)) else {
            break;
        };
        if jx != jy {
            break;
        }
        let (Ok((_, fx)), Ok((_, fy))) = (ind.induced_step(x), ind.induced_step(y)) else {
            break;
        };
        s += 1;
        x = fx;
        y = fy;
    }
    s
}

pub fn roof_holder_sum(
    ind: &InducedMap<f64>,
    roof: &Roof,
    theta: f64,
    cells: usize,
    pairs: usize,
    seed: u64,
) -> Result<RoofHolderSum> {
    let Some(map) = ind.map() else {
        return Err(Error::Unsupported("needs an induced map with forward dynamics".into()));
    };
    let cells = cells.min(ind.cells().len());
    let results: Vec<(f64, f64)> = (0..cells)
        .into_par_iter()
        .map(|j| {
            let cell = &ind.cells()[j];
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let width = cell.right - cell.left;
            let mut best_h = 0.0f64;
            let mut best_hp = 0.0f64;
            for k in 0..pairs {
                let x = cell.left + width * rng.random::<f64>();
                let delta = width * 0.5f64.powi((k % 24) as i32) * rng.random::<f64>();
                let y = if x + delta < cell.right { x + delta } else { x - delta };
                if y <= cell.left || y >= cell.right || x == y {
                    continue;
                }
                let s = separation_time(ind, x, y, 40).max(1);
                let weight = theta.powi(-(s as i32));
                let (_, hx) = forward_sum(ind, roof, x, None);
                let (_, hy) = forward_sum(ind, roof, y, None);
                best_hp = best_hp.max((hx - hy).abs() * weight);
                let (mut p, mut q) = (x, y);
                for _ in 0..cell.r {
                    best_h = best_h.max((roof.eval(p) - roof.eval(q)).abs() * weight);
                    p = map.evaluate(p).unwrap_or(p);
                    q = map.evaluate(q).unwrap_or(q);
                }
            }
            (best_hp, best_h)
        })
        .collect();
    let per_cell: Vec<f64> = results.iter().map(|r| r.0).collect();
    let lhs = per_cell.iter().zip(ind.cells()).map(|(q, c)| q * c.weight).sum();
    let h_theta = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let r_bar = ind.mean_return();
    Ok(RoofHolderSum { per_cell, lhs, h_theta, r_bar, holds: lhs <= h_theta * r_bar })
}

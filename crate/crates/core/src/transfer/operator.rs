use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::InducedMap;
use crate::quadrature::GaussLegendre;
use crate::roof::Roof;

use super::basis::CylinderBasis;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense matrix acting on leaf values, with its twist parameters.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub mat: DMatrix<Complex64>,
    pub s: Complex64,
    pub z: Complex64,
    /// Return-time truncation level, if any.
    pub n_trunc: Option<usize>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.mat.nrows();
        let mut out = vec![ZERO; n];
        for (j, &x) in v.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            let col = self.mat.column(j);
            for i in 0..n {
                out[i] += col[i] * x;
            }
        }
        out
    }

    pub fn apply_power(&self, v: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut w = v.to_vec();
        for _ in 0..n {
            w = self.apply(&w);
        }
        w
    }

    /// `max_e |Σ_e' M[e,e'] - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.mat.nrows())
            .map(|i| (self.mat.row(i).iter().sum::<Complex64>() - ONE).norm())
            .fold(0.0, f64::max)
    }

    pub fn min_entry_re(&self) -> f64 {
        self.mat.iter().map(|c| c.re).fold(f64::INFINITY, f64::min)
    }

    /// Entrywise maximum modulus of `self - other`.
    pub fn max_diff(&self, other: &OperatorMatrix) -> f64 {
        self.mat.iter().zip(other.mat.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Eigenvalue moduli in decreasing order.
    pub fn spectrum_moduli(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.mat.clone().eigenvalues().map_or_else(
            || {
                let re = self.mat.map(|c| c.re);
                re.complex_eigenvalues().iter().map(|c| c.norm()).collect()
            },
            |ev| ev.iter().map(|c| c.norm()).collect(),
        );
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }
}

/// Galerkin matrix of `R` by columns: `R[e, e'] = μ_Y(e' ∩ F^{-1} e) / μ_Y(e)`,
/// with the lump column completing each row sum to one.
pub(crate) fn galerkin_columns(basis: &CylinderBasis) -> Vec<Vec<(usize, f64)>> {
    let leaves = basis.leaves();
    let n = leaves.len();
    let mut cols = vec![Vec::new(); n];
    let mut row_sum = vec![0.0; n];
    for (col, c) in leaves.iter().enumerate() {
        let Some(j) = c.symbol() else { continue };
        // leaves are sorted, so the rows inside the image form a contiguous run
        let start = leaves.partition_point(|l| l.left < c.image.0);
        for row in start..n {
            if !basis.inside(row, c.image) {
                break;
            }
            let x = basis.preimage_weight(j, row) / leaves[row].weight;
            cols[col].push((row, x));
            row_sum[row] += x;
        }
    }
    if let Some(l) = basis.lump() {
        cols[l] = (0..n).map(|row| (row, (1.0 - row_sum[row]).max(0.0))).collect();
    }
    cols
}

pub(crate) fn galerkin_r(basis: &CylinderBasis) -> DMatrix<f64> {
    let n = basis.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (col, entries) in galerkin_columns(basis).into_iter().enumerate() {
        for (row, x) in entries {
            m[(row, col)] = x;
        }
    }
    m
}

/// Transfer operator `R` of the induced map on the cylinder basis.
pub fn assemble_r(basis: &CylinderBasis, ind: &InducedMap<f64>) -> Result<OperatorMatrix> {
    check_match(basis, ind)?;
    let m = galerkin_r(basis);
    Ok(OperatorMatrix { mat: m.map(|x| Complex64::new(x, 0.0)), s: ZERO, z: ZERO, n_trunc: None })
}

pub(crate) fn check_match(basis: &CylinderBasis, ind: &InducedMap<f64>) -> Result<()> {
    let own = basis.induced();
    if !std::ptr::eq(own, ind)
        && (own.cells().len() != ind.cells().len()
            || own.base() != ind.base()
            || own.cells().iter().zip(ind.cells()).any(|(a, b)| a != b))
    {
        return Err(Error::Construction("basis was built over a different induced map".into()));
    }
    Ok(())
}

/// Inverse branches `y_j = F_j^{-1} x`, `j < count`, with Lebesgue Jacobian and
/// `H'(y_j) = Σ_{ℓ < r'} h(T^ℓ y_j)`.
pub(crate) fn branch_sums(
    ind: &InducedMap<f64>,
    roof: &Roof,
    x: f64,
    count: usize,
    n_trunc: Option<usize>,
    out: &mut Vec<(f64, f64, f64)>,
) {
    out.clear();
    let count = count.min(ind.cells().len());
    let pm = ind.map().and_then(|m| m.alpha()).is_some();
    if pm {
        let mut ys = Vec::with_capacity(count);
        ind.for_each_inverse(x, count, |_, y, g| ys.push((y, g)));
        // z_0 = x, z_m = 2 y_m - 1; T^ℓ y_j = z_{j+1-ℓ} for ℓ ≥ 1
        let mut prefix = Vec::with_capacity(count + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for (m, &(y, _)) in ys.iter().enumerate() {
            let z = if m == 0 { x } else { 2.0 * y - 1.0 };
            acc += roof.eval(z);
            prefix.push(acc);
        }
        for (j, &(y, g)) in ys.iter().enumerate() {
            let r = ind.cells()[j].r;
            let rp = n_trunc.map_or(r, |n| r.min(n));
            let lo = j + 2 - rp;
            let h = roof.eval(y) + if rp > 1 { prefix[j + 1] - prefix[lo] } else { 0.0 };
            out.push((y, g, h));
        }
    } else {
        ind.for_each_inverse(x, count, |j, y, g| {
            let r = ind.cells()[j].r;
            let rp = n_trunc.map_or(r, |n| r.min(n));
            let orbit = ind.column_orbit(j, x);
            let h = orbit[..rp].iter().map(|&p| roof.eval(p)).sum();
            out.push((y, g, h));
        });
    }
}

/// `(r'(y), H'(y))` by forward iteration from a base point.
pub(crate) fn forward_sum(ind: &InducedMap<f64>, roof: &Roof, y: f64, n_trunc: Option<usize>) -> (usize, f64) {
    let (a, _) = ind.base();
    let Some(map) = ind.map() else {
        let idx = ind.locate(y).ok().flatten().unwrap_or(0);
        let r = ind.cells()[idx].r;
        let rp = n_trunc.map_or(r, |n| r.min(n));
        return (rp, roof.eval(y) * rp as f64);
    };
    let cap = n_trunc.unwrap_or(usize::MAX);
    let mut p = y;
    let mut h = 0.0;
    let mut k = 0;
    loop {
        h += roof.eval(p);
        k += 1;
        p = map.evaluate(p).unwrap_or(a);
        if p >= a || k >= cap {
            return (k, h);
        }
    }
}

/// Twisted operator `R_{s,z} v = R(e^{s H'} e^{z r'} v)` with `r' = min{r, N}`.
pub fn assemble_twisted(
    basis: &CylinderBasis,
    ind: &InducedMap<f64>,
    roof: &Roof,
    s: Complex64,
    z: Complex64,
    n_trunc: Option<usize>,
) -> Result<OperatorMatrix> {
    check_match(basis, ind)?;
    let base = galerkin_r(basis);
    if s == ZERO && z == ZERO {
        return Ok(OperatorMatrix { mat: base.map(|x| Complex64::new(x, 0.0)), s, z, n_trunc });
    }
    let leaves = basis.leaves();
    let n = leaves.len();
    let cutoff = basis.cutoff();
    let gl = GaussLegendre::<f64>::new(8);
    let mut buf = Vec::new();
    // factor[e][j]: μ-average of e^{sH'+zr'} over F_j^{-1} e
    let mut factor = vec![vec![ONE; cutoff]; n];
    for (e, c) in leaves.iter().enumerate() {
        let mut spread = 0.0f64;
        let mut probe = |x: f64, lo: &mut Vec<f64>, hi: &mut Vec<f64>| {
            branch_sums(ind, roof, x, cutoff, n_trunc, &mut buf);
            for (j, &(_, _, h)) in buf.iter().enumerate() {
                lo[j] = lo[j].min(h);
                hi[j] = hi[j].max(h);
            }
        };
        let mut lo = vec![f64::INFINITY; cutoff];
        let mut hi = vec![f64::NEG_INFINITY; cutoff];
        for t in [0.0, 0.5, 1.0] {
            probe(c.left + t * c.width(), &mut lo, &mut hi);
        }
        for j in 0..cutoff {
            spread = spread.max(hi[j] - lo[j]);
        }
        let panels = 1 + (s.im.abs() * spread * 2.0).ceil() as usize;
        let mut num = vec![ZERO; cutoff];
        let mut den = vec![0.0; cutoff];
        for p in 0..panels {
            let a = c.left + c.width() * p as f64 / panels as f64;
            let b = c.left + c.width() * (p + 1) as f64 / panels as f64;
            for (x, w) in gl.mapped(a, b) {
                branch_sums(ind, roof, x, cutoff, n_trunc, &mut buf);
                for (j, &(y, g, h)) in buf.iter().enumerate() {
                    let r = ind.cells()[j].r;
                    let rp = n_trunc.map_or(r, |n| r.min(n)) as f64;
                    let d = w * ind.density(y) * g;
                    num[j] += (s * h + z * rp).exp() * d;
                    den[j] += d;
                }
            }
        }
        for j in 0..cutoff {
            if den[j] > 0.0 {
                factor[e][j] = num[j] / den[j];
            }
        }
    }
    let lump_factor = basis.lump().map(|l| {
        let c = &leaves[l];
        let mut num = ZERO;
        let mut den = 0.0;
        let panels = 16;
        for p in 0..panels {
            let a = c.left + c.width() * p as f64 / panels as f64;
            let b = c.left + c.width() * (p + 1) as f64 / panels as f64;
            for (y, w) in gl.mapped(a, b) {
                let (rp, h) = forward_sum(ind, roof, y, n_trunc);
                let d = w * ind.density(y);
                num += (s * h + z * rp as f64).exp() * d;
                den += d;
            }
        }
        num / den
    });
    let mut mat = DMatrix::<Complex64>::zeros(n, n);
    for col in 0..n {
        match leaves[col].symbol() {
            Some(j) => {
                for row in 0..n {
                    if base[(row, col)] != 0.0 {
                        mat[(row, col)] = factor[row][j] * base[(row, col)];
                    }
                }
            }
            None => {
                let f = lump_factor.unwrap_or(ONE);
                for row in 0..n {
                    mat[(row, col)] = f * base[(row, col)];
                }
            }
        }
    }
    Ok(OperatorMatrix { mat, s, z, n_trunc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapModel;
    use std::sync::Arc;

    fn doubling(depth: usize) -> CylinderBasis {
        let ind = Arc::new(InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2).unwrap());
        CylinderBasis::new(ind, 2, depth, 2).unwrap()
    }

    #[test]
    fn doubling_r_on_step_coordinate() {
        // v = x rounded down to depth-5 dyadics is leaf-constant and R v is exact
        let basis = doubling(6);
        let r = assemble_r(&basis, basis.induced()).unwrap();
        let step = |x: f64| (x * 32.0).floor() / 32.0;
        let v: Vec<Complex64> = basis.leaves().iter().map(|c| Complex64::new(step(c.midpoint()), 0.0)).collect();
        let rv = r.apply(&v);
        for (c, a) in basis.leaves().iter().zip(&rv) {
            let x = c.midpoint();
            let exact = 0.5 * (step(x / 2.0) + step((x + 1.0) / 2.0));
            assert!((a.re - exact).abs() < 1e-12 && a.im == 0.0);
        }
    }

    #[test]
    fn constant_twist_factors_out() {
        let basis = doubling(5);
        let roof = Roof::constant(1.0).unwrap();
        let r = assemble_r(&basis, basis.induced()).unwrap();
        let s = Complex64::new(0.0, 3.0);
        let z = Complex64::new(0.0, 0.7);
        let t = assemble_twisted(&basis, basis.induced(), &roof, s, z, None).unwrap();
        let f = (s + z).exp();
        for (a, b) in t.mat.iter().zip(r.mat.iter()) {
            assert!((a - f * b).norm() < 1e-14);
        }
    }

    #[test]
    fn mismatched_map_is_rejected() {
        let basis = doubling(2);
        let other = InducedMap::induce(&MapModel::pomeau_manneville(0.5).unwrap(), (0.5, 1.0), 20).unwrap();
        assert!(assemble_r(&basis, &other).is_err());
    }
}

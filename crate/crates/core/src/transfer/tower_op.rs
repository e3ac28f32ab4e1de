use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::maps::pm_left_inverse;
use crate::quadrature::GaussLegendre;
use crate::roof::Roof;

use super::basis::CylinderBasis;
use super::operator::{galerkin_columns, ONE, ZERO};

/// One column of the discretized tower, standing over base leaf `leaf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub leaf: usize,
    pub height: usize,
    /// `μ_Y` mass of the column base.
    pub mass: f64,
    /// Return-time bin carved out of the lump rather than a leaf of its own.
    pub binned: bool,
}

/// Transfer operator of a discretized tower, `L_s v = L(e^{s h} v)`, acting on
/// values indexed by states `(column, level)`.
#[derive(Debug, Clone)]
pub struct TowerOperator {
    basis: Arc<CylinderBasis>,
    columns: Vec<Column>,
    offsets: Vec<usize>,
    n_states: usize,
    /// Base-step weights by column: `(base leaf, weight)`.
    block: Vec<Vec<(usize, f64)>>,
    weights: Option<Vec<Complex64>>,
    s: Complex64,
    n_trunc: Option<usize>,
    r_bar: f64,
}

impl TowerOperator {
    /// Tower with `r' = min{r, N}`; needs `N` no larger than the lump's return
    /// time so that `r'` is constant on every leaf.
    pub fn truncated(basis: Arc<CylinderBasis>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("truncation level must be at least 1".into()));
        }
        if basis.lump().is_some() && n > basis.lump_return() {
            return Err(Error::Parameter(format!(
                "N = {n} exceeds the lump return time {}; raise the basis cutoff",
                basis.lump_return()
            )));
        }
        let columns: Vec<Column> = basis
            .leaves()
            .iter()
            .enumerate()
            .map(|(e, c)| Column { leaf: e, height: basis.return_time(e).min(n), mass: c.weight, binned: false })
            .collect();
        let block = galerkin_columns(&basis);
        Ok(Self::from_parts(basis, columns, block, Some(n)))
    }

    /// Untruncated tower in which the lump is split into return-time bins: unit
    /// bins up to `unit_until`, then geometric bins of ratio `ratio` up to
    /// `r_max`, with masses from the induced map's tail.
    pub fn binned(basis: Arc<CylinderBasis>, unit_until: usize, r_max: usize, ratio: f64) -> Result<Self> {
        let ind = basis.induced();
        if ind.map().and_then(|m| m.alpha()).is_none() {
            return Err(Error::Unsupported("return-time bins need an intermittent map".into()));
        }
        let Some(lump) = basis.lump() else {
            return Err(Error::Parameter("basis has no lump to split".into()));
        };
        if !(ratio > 1.0) || r_max <= unit_until {
            return Err(Error::Parameter("bins need ratio > 1 and r_max > unit_until".into()));
        }
        let r0 = basis.lump_return();
        let mut edges = Vec::new();
        let mut r = r0;
        while r < r_max {
            edges.push(r);
            r = if r < unit_until { r + 1 } else { ((r as f64 * ratio).ceil() as usize).max(r + 1) };
        }
        edges.push(r_max);
        let lump_mass = basis.leaves()[lump].weight;
        let mut bins = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let m = ind.return_time_tail(a - 1).total - ind.return_time_tail(b - 1).total;
            let height = ((a + b - 1) as f64 / 2.0).round() as usize;
            bins.push((height, m));
        }
        // the last bin absorbs everything beyond r_max
        if let Some(last) = bins.last_mut() {
            last.1 += ind.return_time_tail(r_max - 1).total;
        }
        let total: f64 = bins.iter().map(|b| b.1).sum();
        let mut r = galerkin_columns(&basis);
        let lump_col = std::mem::take(&mut r[lump]);
        let mut columns = Vec::new();
        let mut block = Vec::new();
        for (e, c) in basis.leaves().iter().enumerate() {
            if e == lump {
                continue;
            }
            columns.push(Column { leaf: e, height: basis.return_time(e), mass: c.weight, binned: false });
            block.push(std::mem::take(&mut r[e]));
        }
        for (h, m) in bins {
            let mass = m * lump_mass / total;
            columns.push(Column { leaf: lump, height: h, mass, binned: true });
            block.push(lump_col.iter().map(|&(i, x)| (i, x * mass / lump_mass)).collect());
        }
        Ok(Self::from_parts(basis, columns, block, None))
    }

    fn from_parts(basis: Arc<CylinderBasis>, columns: Vec<Column>, block: Vec<Vec<(usize, f64)>>, n_trunc: Option<usize>) -> Self {
        let mut offsets = Vec::with_capacity(columns.len());
        let mut acc = 0;
        for c in &columns {
            offsets.push(acc);
            acc += c.height;
        }
        let r_bar = columns.iter().map(|c| c.mass * c.height as f64).sum();
        Self { basis, columns, offsets, n_states: acc, block, weights: None, s: ZERO, n_trunc, r_bar }
    }

    /// Same tower with `L_s v = L(e^{s h} v)`, the factor averaged over each state.
    pub fn twisted(&self, roof: &Roof, s: Complex64) -> Self {
        let weights = if s == ZERO { None } else { Some(self.state_average(|x| (s * roof.eval(x)).exp())) };
        Self { weights, s, ..self.clone() }
    }

    pub fn basis(&self) -> &CylinderBasis {
        &self.basis
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn s(&self) -> Complex64 {
        self.s
    }

    pub fn n_trunc(&self) -> Option<usize> {
        self.n_trunc
    }

    /// `∫ r' dμ_Y` over the discretization.
    pub fn mean_return(&self) -> f64 {
        self.r_bar
    }

    pub fn state(&self, column: usize, level: usize) -> usize {
        self.offsets[column] + level
    }

    /// `(column, level)` of a state index.
    pub fn locate_state(&self, state: usize) -> (usize, usize) {
        let c = self.offsets.partition_point(|&o| o <= state) - 1;
        (c, state - self.offsets[c])
    }

    /// `μ_Δ` of every state.
    pub fn state_measure(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_states];
        for (c, col) in self.columns.iter().enumerate() {
            for l in 0..col.height {
                m[self.offsets[c] + l] = col.mass / self.r_bar;
            }
        }
        m
    }

    /// States at level 0, indexed like the columns.
    pub fn base_states(&self) -> Vec<usize> {
        self.offsets.clone()
    }

    /// `μ_Y(r' ≥ n)` over the discretization.
    pub fn return_tail_ge(&self, n: usize) -> f64 {
        self.columns.iter().filter(|c| c.height >= n).map(|c| c.mass).sum()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n_states];
        let mut tops = vec![ZERO; self.columns.len()];
        let wt = |i: usize| self.weights.as_ref().map_or(ONE, |w| w[i]);
        for (c, col) in self.columns.iter().enumerate() {
            let off = self.offsets[c];
            for l in 0..col.height - 1 {
                out[off + l + 1] = wt(off + l) * v[off + l];
            }
            tops[c] = wt(off + col.height - 1) * v[off + col.height - 1];
        }
        let mut base = vec![ZERO; self.basis.len()];
        for (c, &t) in tops.iter().enumerate() {
            if t == ZERO {
                continue;
            }
            for &(i, x) in &self.block[c] {
                base[i] += t * x;
            }
        }
        for (c, col) in self.columns.iter().enumerate() {
            out[self.offsets[c]] = base[col.leaf];
        }
        out
    }

    /// Dense matrix of the operator on all states.
    pub fn dense(&self) -> DMatrix<Complex64> {
        let n = self.n_states;
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e[j] = ONE;
            let col = self.apply(&e);
            e[j] = ZERO;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// State averages of `f∘π` with respect to `μ_Δ`.
    pub fn state_average<F: Fn(f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        let basis = &self.basis;
        let ind = basis.induced();
        let gl = GaussLegendre::<f64>::new(8);
        let mut out = vec![ZERO; self.n_states];
        let chain = self.bin_chain();
        for (c, col) in self.columns.iter().enumerate() {
            let off = self.offsets[c];
            let leaf = &basis.leaves()[col.leaf];
            let h = col.height;
            let mut acc = vec![ZERO; h];
            let mut den = 0.0;
            if col.binned {
                // representative orbit through the midpoint of the base
                let r = h;
                out[off] = f(0.5 * (1.0 + chain[r - 1]));
                for l in 1..h {
                    out[off + l] = f(chain[r - l]);
                }
                continue;
            }
            match leaf.symbol() {
                Some(j) => {
                    let panels = 4;
                    for p in 0..panels {
                        let a = leaf.image.0 + (leaf.image.1 - leaf.image.0) * p as f64 / panels as f64;
                        let b = leaf.image.0 + (leaf.image.1 - leaf.image.0) * (p + 1) as f64 / panels as f64;
                        for (x, w) in gl.mapped(a, b) {
                            let (y, g) = ind.inverse_branch(j, x);
                            let d = w * ind.density(y) * g;
                            let orbit = ind.column_orbit(j, x);
                            for l in 0..h {
                                acc[l] += f(orbit[l]) * d;
                            }
                            den += d;
                        }
                    }
                }
                None => {
                    let map = ind.map();
                    let panels = 16;
                    for p in 0..panels {
                        let a = leaf.left + leaf.width() * p as f64 / panels as f64;
                        let b = leaf.left + leaf.width() * (p + 1) as f64 / panels as f64;
                        for (y, w) in gl.mapped(a, b) {
                            let d = w * ind.density(y);
                            let mut x = y;
                            for l in 0..h {
                                acc[l] += f(x) * d;
                                if let Some(m) = map {
                                    x = m.evaluate(x).unwrap_or(x);
                                }
                            }
                            den += d;
                        }
                    }
                }
            }
            for l in 0..h {
                out[off + l] = acc[l] / den;
            }
        }
        out
    }

    /// `z_m = (T|_{[0,1/2)})^{-m}(3/4)` for the binned columns.
    fn bin_chain(&self) -> Vec<f64> {
        let top = self.columns.iter().filter(|c| c.binned).map(|c| c.height).max().unwrap_or(0);
        let Some(alpha) = self.basis.induced().map().and_then(|m| m.alpha()) else {
            return Vec::new();
        };
        let mut chain = Vec::with_capacity(top + 1);
        let mut z = 0.75;
        chain.push(z);
        for _ in 0..top {
            z = pm_left_inverse(alpha, z);
            chain.push(z);
        }
        chain
    }

    /// `Σ_states μ_Δ · a · b`.
    pub fn pair(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let m = self.state_measure();
        m.iter().zip(a).zip(b).map(|((m, x), y)| *x * *y * *m).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{InducedMap, MapModel};

    fn pm_basis(cutoff: usize) -> Arc<CylinderBasis> {
        let map = MapModel::pomeau_manneville(0.5).unwrap();
        let ind = Arc::new(InducedMap::induce(&map, (0.5, 1.0), 400).unwrap());
        Arc::new(CylinderBasis::new(ind, cutoff, 2, 2).unwrap())
    }

    #[test]
    fn constants_are_fixed_and_measure_invariant() {
        let op = TowerOperator::truncated(pm_basis(30), 20).unwrap();
        let one = vec![ONE; op.n_states()];
        let l1 = op.apply(&one);
        assert!(l1.iter().all(|x| (x - ONE).norm() < 1e-12));
        let m = op.state_measure();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let dense = op.dense();
        for j in 0..op.n_states() {
            let s: Complex64 = (0..op.n_states()).map(|i| dense[(i, j)] * m[i]).sum();
            assert!((s.re - m[j]).abs() < 1e-12, "state {j}");
        }
    }

    #[test]
    fn binned_tower_keeps_total_mass() {
        let op = TowerOperator::binned(pm_basis(30), 60, 2000, 1.1).unwrap();
        let total: f64 = op.columns().iter().map(|c| c.mass).sum();
        assert!((total - 1.0).abs() < 1e-10);
        let one = vec![ONE; op.n_states()];
        assert!(op.apply(&one).iter().all(|x| (x - ONE).norm() < 1e-12));
    }

    #[test]
    fn truncation_beyond_lump_is_rejected() {
        assert!(TowerOperator::truncated(pm_basis(10), 30).is_err());
    }
}

//! Young towers over induced maps and their truncations `r' = min{r, N}`.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::maps::InducedMap;
use crate::scalar::Real;

/// A point `(y, ℓ)` of the tower, `y` in the base cell `column`, `0 ≤ ℓ < r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerPoint<T> {
    pub column: usize,
    pub level: usize,
    pub y: T,
}

/// Discrete suspension `Δ` of an induced map by its return time.
#[derive(Debug, Clone)]
pub struct Tower<T> {
    ind: Arc<InducedMap<T>>,
    theta: T,
    r_bar: T,
}

impl<T: Real> Tower<T> {
    pub fn new(ind: Arc<InducedMap<T>>, theta: T) -> Result<Self> {
        if !(theta > T::zero() && theta < T::one()) {
            return Err(Error::Parameter(format!("theta must lie in (0,1), got {theta}")));
        }
        let r_bar = ind.mean_return();
        Ok(Self { ind, theta, r_bar })
    }

    /// Tower with `θ = λ^{-η}`.
    pub fn with_default_theta(ind: Arc<InducedMap<T>>) -> Result<Self> {
        let theta = ind.lambda.powf(-ind.eta);
        Self::new(ind, theta)
    }

    pub fn induced(&self) -> &InducedMap<T> {
        &self.ind
    }

    pub fn induced_arc(&self) -> Arc<InducedMap<T>> {
        self.ind.clone()
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn mean_return(&self) -> T {
        self.r_bar
    }

    pub fn columns(&self) -> usize {
        self.ind.cells().len()
    }

    pub fn height(&self, column: usize) -> usize {
        self.ind.cells()[column].r
    }

    /// `μ_Δ(Δ_{j,ℓ}) = μ_Y(Y_j)/r̄`, independent of the level.
    pub fn cell_measure(&self, column: usize) -> T {
        self.ind.cells()[column].weight / self.r_bar
    }

    /// Total measure of the represented cells.
    pub fn represented_measure(&self) -> T {
        self.ind.represented_mean_return() / self.r_bar
    }

    /// Measure carried by the columns beyond the branch cutoff.
    pub fn tail_measure(&self) -> T {
        self.ind.tail().map_or(T::zero(), |t| t.r_mass) / self.r_bar
    }

    /// Tower map `f`; the top of a column is sent to the base via `F`.
    pub fn step(&self, p: TowerPoint<T>) -> Result<TowerPoint<T>> {
        if p.level + 1 < self.height(p.column) {
            return Ok(TowerPoint { level: p.level + 1, ..p });
        }
        let (_, fy) = self.ind.induced_step(p.y)?;
        let column = self
            .ind
            .locate(fy)?
            .ok_or_else(|| Error::Domain(format!("orbit entered the unrepresented tail at {fy}")))?;
        Ok(TowerPoint { column, level: 0, y: fy })
    }

    /// Projection `π(y, ℓ) = T^ℓ y`.
    pub fn project(&self, p: TowerPoint<T>) -> Result<T> {
        match self.ind.map() {
            Some(map) => {
                let mut x = p.y;
                for _ in 0..p.level {
                    x = map.evaluate(x)?;
                }
                Ok(x)
            }
            None => Ok(p.y),
        }
    }

    /// Largest `|π(f p) - T π(p)|` over the given points (intermediate levels only,
    /// where `f` acts as `T` on projections).
    pub fn projection_defect(&self, points: &[TowerPoint<T>]) -> Result<T> {
        let Some(map) = self.ind.map() else {
            return Ok(T::zero());
        };
        let mut worst = T::zero();
        for &p in points {
            let fp = self.step(p)?;
            let lhs = self.project(fp)?;
            let rhs = map.evaluate(self.project(p)?)?;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }

    /// Largest gap between `μ_Δ(Δ_{j,0})` and the measure of its preimage
    /// `∪_{j'} Δ_{j', r(j')-1} ∩ F^{-1} Y_j`, over represented preimage columns.
    /// The unrepresented tail can account for at most its own measure.
    pub fn base_invariance_defect(&self) -> T {
        let cells = self.ind.cells();
        let n = cells.len();
        let (a, b) = self.ind.base();
        let mut bounds: Vec<T> = cells.iter().flat_map(|c| [c.left, c.right]).collect();
        bounds.push(a);
        bounds.push(b);
        bounds.sort_by(|x, y| x.partial_cmp(y).unwrap());
        bounds.dedup();
        // preimages of every boundary point under every branch
        let mut pre = vec![Vec::with_capacity(n); bounds.len()];
        for (i, &x) in bounds.iter().enumerate() {
            self.ind.for_each_inverse(x, n, |_, y, _| pre[i].push(y));
        }
        let mut worst = T::zero();
        for c in cells {
            let i0 = bounds.iter().position(|&x| x == c.left).unwrap();
            let i1 = bounds.iter().position(|&x| x == c.right).unwrap();
            let mut mass = T::zero();
            for jp in 0..n {
                let (u, v) = (pre[i0][jp], pre[i1][jp]);
                let (u, v) = if u < v { (u, v) } else { (v, u) };
                mass = mass + self.ind.measure(u, v);
            }
            worst = worst.max((mass - c.weight).abs() / self.r_bar);
        }
        worst
    }

    /// Separation time on the tower; `None` encodes `s = ∞` (identical points).
    pub fn separation_time(&self, x: TowerPoint<T>, y: TowerPoint<T>, cap: usize) -> Result<Option<usize>> {
        if x == y {
            return Ok(None);
        }
        if x.column != y.column || x.level != y.level {
            return Ok(Some(0));
        }
        let (mut u, mut v) = (x.y, y.y);
        for n in 0..cap {
            let cu = self.ind.locate(u)?;
            let cv = self.ind.locate(v)?;
            if cu != cv || cu.is_none() {
                return Ok(Some(n));
            }
            u = self.ind.induced_step(u)?.1;
            v = self.ind.induced_step(v)?.1;
            if u == v {
                return Ok(None);
            }
        }
        Ok(Some(cap))
    }

    /// `d_θ(x, y) = θ^{s(x,y)}`.
    pub fn d_theta(&self, x: TowerPoint<T>, y: TowerPoint<T>) -> Result<T> {
        Ok(match self.separation_time(x, y, 64)? {
            None => T::zero(),
            Some(s) => self.theta.powi(s as i32),
        })
    }

    pub fn truncate(&self, n: usize) -> Result<TruncatedTower<T>> {
        TruncatedTower::new(self.clone(), n)
    }

    /// Writes `(j, ℓ, measure, r, r', left, right)` rows; `r'` equals `r` here.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_cells(self, usize::MAX, out)
    }
}

fn write_cells<T: Real, W: Write>(tower: &Tower<T>, n: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "level", "measure", "r", "r_trunc", "left", "right"])?;
    let ind = tower.induced();
    let (a, b) = ind.base();
    for (idx, c) in ind.cells().iter().enumerate() {
        let lo = ind.column_orbit(idx, a);
        let hi = ind.column_orbit(idx, b);
        let rp = c.r.min(n);
        for l in 0..rp {
            let (p, q) = if lo[l] < hi[l] { (lo[l], hi[l]) } else { (hi[l], lo[l]) };
            w.write_record([
                c.j.to_string(),
                l.to_string(),
                format!("{:e}", tower.cell_measure(idx).as_f64()),
                c.r.to_string(),
                rp.to_string(),
                format!("{:e}", p.as_f64()),
                format!("{:e}", q.as_f64()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Exact comparison of both sides of the two truncation identities.
#[derive(Debug, Clone, Copy)]
pub struct TruncationIdentities<T> {
    /// `r̄ - r̄'` on represented mass.
    pub mean_gap: T,
    /// `Σ_{n>N} μ_Y(r ≥ n)` on represented mass.
    pub mean_gap_formula: T,
    /// `μ_Δ(Δ_right)` on represented columns.
    pub right_measure: T,
    /// `(1/r̄){N μ_Y(r ≥ N) + Σ_{n>N} μ_Y(r ≥ n)}` on represented mass.
    pub right_measure_formula: T,
}

impl<T: Real> TruncationIdentities<T> {
    pub fn max_error(&self) -> T {
        (self.mean_gap - self.mean_gap_formula)
            .abs()
            .max((self.right_measure - self.right_measure_formula).abs())
    }
}

/// `μ_Δ(E_k)` next to its upper bound.
#[derive(Debug, Clone, Copy)]
pub struct EkMeasure<T> {
    pub measured: T,
    pub bound: T,
}

impl<T: Real> EkMeasure<T> {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound * (T::one() + T::lit(1e-12))
    }
}

/// Tower with return time truncated at `N`.
#[derive(Debug, Clone)]
pub struct TruncatedTower<T> {
    tower: Tower<T>,
    n: usize,
    r_bar_trunc: T,
}

impl<T: Real> TruncatedTower<T> {
    pub fn new(tower: Tower<T>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("truncation level must be at least 1".into()));
        }
        let ind = tower.induced();
        let mut r_bar_trunc: T = ind
            .cells()
            .iter()
            .map(|c| T::from_usize_lossy(c.r.min(n)) * c.weight)
            .sum();
        if let Some(t) = ind.tail() {
            r_bar_trunc = r_bar_trunc
                + if n < t.first_r {
                    T::from_usize_lossy(n) * t.mass
                } else {
                    t.r_mass
                };
        }
        Ok(Self { tower, n, r_bar_trunc })
    }

    pub fn level(&self) -> usize {
        self.n
    }

    pub fn tower(&self) -> &Tower<T> {
        &self.tower
    }

    pub fn induced(&self) -> &InducedMap<T> {
        self.tower.induced()
    }

    pub fn r_trunc(&self, column: usize) -> usize {
        self.tower.height(column).min(self.n)
    }

    pub fn mean_return(&self) -> T {
        self.r_bar_trunc
    }

    /// `μ_Δ'(Δ'_{j,ℓ}) = μ_Y(Y_j)/r̄'`.
    pub fn cell_measure(&self, column: usize) -> T {
        self.induced().cells()[column].weight / self.r_bar_trunc
    }

    pub fn is_right(&self, column: usize) -> bool {
        self.tower.height(column) >= self.n
    }

    /// Truncation of this truncated tower at `n2`.
    pub fn retruncate(&self, n2: usize) -> Result<Self> {
        Self::new(self.tower.clone(), self.n.min(n2))
    }

    pub fn identities(&self) -> TruncationIdentities<T> {
        let ind = self.induced();
        let cells = ind.cells();
        let rep_mean = ind.represented_mean_return();
        let rep_trunc: T = cells.iter().map(|c| T::from_usize_lossy(c.r.min(self.n)) * c.weight).sum();
        let max_r = ind.max_return();
        let gap_formula: T = (self.n + 1..=max_r).map(|k| ind.represented_tail_ge(k)).sum();
        let right: T = cells
            .iter()
            .filter(|c| c.r >= self.n)
            .map(|c| T::from_usize_lossy(c.r) * c.weight)
            .sum::<T>()
            / self.tower.mean_return();
        let right_formula = (T::from_usize_lossy(self.n) * ind.represented_tail_ge(self.n) + gap_formula)
            / self.tower.mean_return();
        TruncationIdentities {
            mean_gap: rep_mean - rep_trunc,
            mean_gap_formula: gap_formula,
            right_measure: right,
            right_measure_formula: right_formula,
        }
    }

    /// `μ_Y(r ≥ k)` including the extrapolated tail.
    fn tail_ge(&self, k: usize) -> T {
        if k == 0 {
            return T::one();
        }
        self.induced().return_time_tail(k - 1).total
    }

    /// `Σ_{n>N} μ_Y(r ≥ n)` including the extrapolated tail.
    pub fn tail_sum_beyond(&self) -> T {
        let ind = self.induced();
        let rep: T = (self.n + 1..=ind.max_return()).map(|k| ind.represented_tail_ge(k)).sum();
        let tail = ind.tail().map_or(T::zero(), |t| {
            // ∫_tail (r - N)^+ dμ_Y, exact while N ≤ first_r
            (t.r_mass - T::from_usize_lossy(self.n) * t.mass).max(T::zero())
        });
        rep + tail
    }

    /// `μ_Δ(Δ_right)` including unrepresented columns.
    pub fn right_measure(&self) -> T {
        let ind = self.induced();
        let rep: T = ind
            .cells()
            .iter()
            .filter(|c| c.r >= self.n)
            .map(|c| T::from_usize_lossy(c.r) * c.weight)
            .sum();
        (rep + ind.tail().map_or(T::zero(), |t| t.r_mass)) / self.tower.mean_return()
    }

    /// Measure of `E_k`, the points whose orbit meets `Δ_right` at some time
    /// `0 ≤ j ≤ k`, by exact enumeration of backward cylinder words.
    pub fn ek_measure(&self, k: usize) -> Result<EkMeasure<T>> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        let ind = self.induced();
        let n = self.n;
        if let Some(t) = ind.tail() {
            if n > t.first_r {
                return Err(Error::Parameter(format!(
                    "truncation level {n} exceeds the represented return times"
                )));
            }
        }
        let r_bar = self.tower.mean_return();
        let bound = (self.tail_sum_beyond() + T::from_usize_lossy(n + k) * self.tail_ge(n)) / r_bar;
        // Y_R = {r ≥ N} as a union of intervals
        let mut target: Vec<(T, T)> = ind
            .cells()
            .iter()
            .filter(|c| c.r >= n)
            .map(|c| (c.left, c.right))
            .collect();
        if let Some(t) = ind.tail() {
            target.push((t.left, t.right));
        }
        merge_intervals(&mut target);
        let left_cols: Vec<usize> = (0..ind.cells().len()).filter(|&i| ind.cells()[i].r < n).collect();
        let mut acc = T::zero();
        if !target.is_empty() {
            self.ek_dfs(&left_cols, &target, 0, k, &mut acc);
        }
        Ok(EkMeasure {
            measured: self.right_measure() + acc / r_bar,
            bound,
        })
    }

    fn ek_dfs(&self, left_cols: &[usize], set: &[(T, T)], w: usize, k: usize, acc: &mut T) {
        let ind = self.induced();
        // preimages of all interval endpoints under all left branches at once
        let count = left_cols.iter().copied().max().map_or(0, |m| m + 1);
        let mut pre: Vec<Vec<(T, T)>> = vec![Vec::with_capacity(set.len()); count];
        for &(a, b) in set {
            let mut ya = vec![T::zero(); count];
            ind.for_each_inverse(a, count, |i, y, _| ya[i] = y);
            ind.for_each_inverse(b, count, |i, y, _| {
                let (p, q) = if ya[i] < y { (ya[i], y) } else { (y, ya[i]) };
                pre[i].push((p, q));
            });
        }
        for &c in left_cols {
            let r = ind.cells()[c].r;
            let mass: T = pre[c].iter().map(|&(a, b)| ind.measure(a, b)).sum();
            if mass <= T::zero() {
                continue;
            }
            let levels = r.min(k - w);
            *acc = *acc + mass * T::from_usize_lossy(levels);
            if w + r < k {
                self.ek_dfs(left_cols, &pre[c], w + r, k, acc);
            }
        }
    }

    /// Writes `(j, ℓ, measure, r, r', left, right)` rows for the truncated cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_cells(&self.tower, self.n, out)
    }
}

fn merge_intervals<T: Real>(v: &mut Vec<(T, T)>) {
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(T, T)> = Vec::with_capacity(v.len());
    for &(a, b) in v.iter() {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    *v = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapModel;

    #[test]
    fn theta_range_is_checked() {
        let ind = Arc::new(InducedMap::induce(&MapModel::<f64>::doubling(), (0.0, 1.0), 2).unwrap());
        assert!(Tower::new(ind.clone(), 1.0).is_err());
        let t = Tower::with_default_theta(ind).unwrap();
        assert_eq!(t.theta(), 0.5);
        assert!(t.truncate(0).is_err());
    }

    #[test]
    fn merges_adjacent_intervals() {
        let mut v = vec![(0.5, 0.6), (0.1, 0.2), (0.2, 0.3)];
        merge_intervals(&mut v);
        assert_eq!(v, vec![(0.1, 0.3), (0.5, 0.6)]);
    }
}

//! Interval maps and first-return induction onto a base interval.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, log_grid, PowerLawFit};
use crate::quadrature::{Chebyshev, GaussLegendre};
use crate::scalar::Real;

/// The concrete interval maps supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapKind<T> {
    Doubling,
    /// `x(1 + 2^α x^α)` on `[0, 1/2)`, `2x - 1` on `[1/2, 1]`.
    PomeauManneville { alpha: T },
}

/// Two-branch interval map on `[0, 1]` with its Hölder data.
#[derive(Debug, Clone)]
pub struct MapModel<T> {
    kind: MapKind<T>,
    pub eta: T,
    pub distortion: T,
    pub lambda: T,
}

impl<T: Real> MapModel<T> {
    pub fn doubling() -> Self {
        Self {
            kind: MapKind::Doubling,
            eta: T::one(),
            distortion: T::one(),
            lambda: T::lit(2.0),
        }
    }

    pub fn pomeau_manneville(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::Parameter(format!("alpha must lie in (0,1), got {alpha}")));
        }
        Ok(Self {
            kind: MapKind::PomeauManneville { alpha },
            eta: T::one(),
            distortion: T::lit(4.0),
            lambda: T::lit(2.0),
        })
    }

    pub fn kind(&self) -> MapKind<T> {
        self.kind
    }

    pub fn alpha(&self) -> Option<T> {
        match self.kind {
            MapKind::PomeauManneville { alpha } => Some(alpha),
            MapKind::Doubling => None,
        }
    }

    /// `β = 1/α - 1` for the intermittent map.
    pub fn beta(&self) -> Option<T> {
        self.alpha().map(|a| T::one() / a - T::one())
    }

    pub fn has_indifferent_fixed_point(&self) -> bool {
        matches!(self.kind, MapKind::PomeauManneville { .. })
    }

    pub fn branch_domains(&self) -> [(T, T); 2] {
        let h = T::lit(0.5);
        [(T::zero(), h), (h, T::one())]
    }

    /// Branch containing `x`; ties go to the right branch.
    pub fn branch_of(&self, x: T) -> Result<usize> {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::Domain(format!("{x} is outside [0,1]")));
        }
        Ok(usize::from(x >= T::lit(0.5)))
    }

    pub fn forward(&self, branch: usize, x: T) -> T {
        let two = T::lit(2.0);
        match (self.kind, branch) {
            (_, 1) => two * x - T::one(),
            (MapKind::Doubling, _) => two * x,
            (MapKind::PomeauManneville { alpha }, _) => x * (T::one() + (two * x).powf(alpha)),
        }
    }

    pub fn inverse(&self, branch: usize, y: T) -> T {
        let half = T::lit(0.5);
        match (self.kind, branch) {
            (_, 1) => (y + T::one()) * half,
            (MapKind::Doubling, _) => y * half,
            (MapKind::PomeauManneville { alpha }, _) => pm_left_inverse(alpha, y),
        }
    }

    pub fn derivative(&self, branch: usize, x: T) -> T {
        let two = T::lit(2.0);
        match (self.kind, branch) {
            (_, 1) | (MapKind::Doubling, _) => two,
            (MapKind::PomeauManneville { alpha }, _) => {
                T::one() + (T::one() + alpha) * (two * x).powf(alpha)
            }
        }
    }

    pub fn evaluate(&self, x: T) -> Result<T> {
        let b = self.branch_of(x)?;
        Ok(self.forward(b, x))
    }

    /// Largest `|inverse(forward(x)) - x|` over a uniform grid in each branch.
    pub fn inverse_roundtrip_error(&self, points: usize) -> T {
        let mut worst = T::zero();
        for (b, (lo, hi)) in self.branch_domains().into_iter().enumerate() {
            for i in 0..points {
                let x = lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(points);
                let back = self.inverse(b, self.forward(b, x));
                worst = worst.max((back - x).abs());
            }
        }
        worst
    }
}

/// Inverse of `x ↦ x(1 + (2x)^α)` on `[0, 1]`: bracketed Newton iteration.
pub fn pm_left_inverse<T: Real>(alpha: T, y: T) -> T {
    if y <= T::zero() {
        return T::zero();
    }
    let two = T::lit(2.0);
    let c = two.powf(alpha);
    let f = |x: T| x * (T::one() + c * x.powf(alpha)) - y;
    // x0 sits left of the root and the function is convex, so Newton is monotone after one step
    let mut lo = y / (T::one() + c * y.powf(alpha));
    let mut hi = y;
    let mut x = lo;
    for _ in 0..100 {
        let fx = f(x);
        if fx == T::zero() {
            break;
        }
        if fx < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let fp = T::one() + (T::one() + alpha) * c * x.powf(alpha);
        let mut next = x - fx / fp;
        if !(next >= lo && next <= hi) {
            next = (lo + hi) * T::lit(0.5);
        }
        let step = (next - x).abs();
        x = next;
        if step <= T::epsilon() * x {
            break;
        }
    }
    x
}

/// One cell `Y_j` of the first-return partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<T> {
    pub j: usize,
    pub r: usize,
    pub left: T,
    pub right: T,
    /// `μ_Y(Y_j)`.
    pub weight: T,
}

/// Aggregate account of the cells beyond the branch cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailAccount<T> {
    /// Return time of the first unrepresented cell.
    pub first_r: usize,
    pub left: T,
    pub right: T,
    pub mass: T,
    /// Extrapolated `∫_{tail} r dμ_Y`.
    pub r_mass: T,
}

/// Declared tail `μ_Y(r > n) ≈ C (ln n)^γ n^{-(β+1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredTail<T> {
    pub beta: T,
    pub gamma: T,
}

#[derive(Debug, Clone)]
enum Density<T> {
    Uniform,
    Smooth {
        rho: Chebyshev<T>,
        phi: Chebyshev<T>,
    },
}

#[derive(Debug, Clone)]
enum Source<T> {
    Map {
        map: MapModel<T>,
        /// Preimage levels `x_0 = 1, x_1 = 1/2, x_{n+1} = left_inverse(x_n)`.
        levels: Vec<T>,
    },
    PiecewiseLinear,
}

/// `μ_Y(r > n)` split into the represented partial sum and the extrapolated tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailValue<T> {
    pub partial: T,
    pub extrapolated: T,
    pub total: T,
}

/// Outcome of [`InducedMap::fit_tail_exponent`].
#[derive(Debug, Clone)]
pub enum TailFit<T> {
    /// `exponent` estimates β + 1, `log_exponent` estimates γ.
    PowerLaw(PowerLawFit<T>),
    /// The tail vanishes on the window (bounded return time).
    ExponentialTail,
}

/// Empirical check of the expansion, bounded-distortion and bijectivity conditions.
#[derive(Debug, Clone)]
pub struct ConditionReport<T> {
    pub cells_checked: usize,
    pub endpoint_error: T,
    pub min_expansion: T,
    pub max_backward_ratio: T,
    pub fitted_distortion: T,
    pub declared_distortion: T,
    pub lambda: T,
}

impl<T: Real> ConditionReport<T> {
    pub fn holds(&self) -> bool {
        self.endpoint_error <= T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
            && self.min_expansion >= self.lambda * (T::one() - T::lit(1e-6))
            && self.max_backward_ratio <= self.declared_distortion
            && self.fitted_distortion <= self.declared_distortion
    }
}

/// First-return map `F = T^r` on the base `Y` with its invariant measure.
#[derive(Debug, Clone)]
pub struct InducedMap<T> {
    source: Source<T>,
    base: (T, T),
    cells: Vec<Cell<T>>,
    /// Suffix sums of cell weights: `suffix[i] = Σ_{k ≥ i} weight_k`.
    suffix: Vec<T>,
    tail: Option<TailAccount<T>>,
    density: Density<T>,
    declared: Option<DeclaredTail<T>>,
    pub eta: T,
    pub lambda: T,
    pub distortion: T,
}

const DENSITY_NODES: usize = 48;
const DENSITY_EXACT_BRANCHES: usize = 256;
const DENSITY_HORIZON: usize = 20_000;

impl<T: Real> InducedMap<T> {
    /// Induces `map` on `base` keeping `cutoff` cells explicitly.
    pub fn induce(map: &MapModel<T>, base: (T, T), cutoff: usize) -> Result<Self> {
        let half = T::lit(0.5);
        match map.kind() {
            MapKind::Doubling => {
                if base != (T::zero(), T::one()) {
                    return Err(Error::Construction(format!(
                        "doubling map induces only on [0,1], got [{}, {}]",
                        base.0, base.1
                    )));
                }
                let cells = vec![
                    Cell { j: 1, r: 1, left: T::zero(), right: half, weight: half },
                    Cell { j: 2, r: 1, left: half, right: T::one(), weight: half },
                ];
                Ok(Self::assemble(
                    Source::Map { map: map.clone(), levels: Vec::new() },
                    base,
                    cells,
                    None,
                    Density::Uniform,
                    None,
                    (map.eta, map.lambda, map.distortion),
                ))
            }
            MapKind::PomeauManneville { alpha } => {
                if base != (half, T::one()) {
                    return Err(Error::Construction(format!(
                        "intermittent map needs the Markov base [1/2,1], got [{}, {}]",
                        base.0, base.1
                    )));
                }
                if cutoff < 2 {
                    return Err(Error::Parameter("branch cutoff must be at least 2".into()));
                }
                let mut levels = Vec::with_capacity(cutoff + 1);
                levels.push(T::one());
                levels.push(half);
                while levels.len() <= cutoff {
                    let last = *levels.last().unwrap();
                    levels.push(pm_left_inverse(alpha, last));
                }
                let density = pm_density(alpha)?;
                let bnd = |n: usize| (T::one() + levels[n]) * half;
                let mut cells: Vec<Cell<T>> = (1..=cutoff)
                    .map(|n| Cell { j: n, r: n, left: bnd(n), right: bnd(n - 1), weight: T::zero() })
                    .collect();
                for c in cells.iter_mut() {
                    c.weight = density_measure(&density, base, c.left, c.right);
                }
                let beta = T::one() / alpha - T::one();
                let p = beta + T::one();
                let mass = density_measure(&density, base, half, bnd(cutoff));
                let jf = T::from_usize_lossy(cutoff);
                // Σ_{m > J} (J/m)^p ≈ ∫_{J+1/2}^∞
                let tail_sum = jf.powf(p) * (jf + half).powf(T::one() - p) / beta;
                let tail = TailAccount {
                    first_r: cutoff + 1,
                    left: half,
                    right: bnd(cutoff),
                    mass,
                    r_mass: mass * (jf + T::one() + tail_sum),
                };
                Ok(Self::assemble(
                    Source::Map { map: map.clone(), levels },
                    base,
                    cells,
                    Some(tail),
                    density,
                    Some(DeclaredTail { beta, gamma: T::zero() }),
                    (map.eta, map.lambda, map.distortion),
                ))
            }
        }
    }

    /// Full-branch affine Gibbs–Markov map on `[0,1]` with the given cell widths
    /// (left to right) and return times. Lebesgue measure is invariant.
    pub fn piecewise_linear(
        widths: &[T],
        returns: &[usize],
        declared: Option<DeclaredTail<T>>,
    ) -> Result<Self> {
        if widths.is_empty() || widths.len() != returns.len() {
            return Err(Error::Construction("widths and return times must match".into()));
        }
        if widths.iter().any(|&w| w <= T::zero()) || returns.contains(&0) {
            return Err(Error::Construction("cells need positive width and return time".into()));
        }
        let total: T = widths.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::Construction(format!("cell widths sum to {total}, not 1")));
        }
        let mut left = T::zero();
        let cells = widths
            .iter()
            .zip(returns)
            .enumerate()
            .map(|(i, (&w, &r))| {
                let c = Cell { j: i + 1, r, left, right: left + w, weight: w };
                left = left + w;
                c
            })
            .collect();
        let lambda = T::one() / widths.iter().copied().fold(T::zero(), T::max);
        Ok(Self::assemble(
            Source::PiecewiseLinear,
            (T::zero(), T::one()),
            cells,
            None,
            Density::Uniform,
            declared,
            (T::one(), lambda, T::one()),
        ))
    }

    fn assemble(
        source: Source<T>,
        base: (T, T),
        cells: Vec<Cell<T>>,
        tail: Option<TailAccount<T>>,
        density: Density<T>,
        declared: Option<DeclaredTail<T>>,
        (eta, lambda, distortion): (T, T, T),
    ) -> Self {
        let mut suffix = vec![T::zero(); cells.len() + 1];
        for i in (0..cells.len()).rev() {
            suffix[i] = suffix[i + 1] + cells[i].weight;
        }
        Self {
            source,
            base,
            cells,
            suffix,
            tail,
            density,
            declared,
            eta,
            lambda,
            distortion,
        }
    }

    pub fn base(&self) -> (T, T) {
        self.base
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    pub fn tail(&self) -> Option<&TailAccount<T>> {
        self.tail.as_ref()
    }

    pub fn declared_tail(&self) -> Option<DeclaredTail<T>> {
        self.declared
    }

    pub fn map(&self) -> Option<&MapModel<T>> {
        match &self.source {
            Source::Map { map, .. } => Some(map),
            Source::PiecewiseLinear => None,
        }
    }

    /// True when the induced map has an underlying interval map, so tower
    /// levels project to genuine points `T^ℓ y`.
    pub fn has_projection(&self) -> bool {
        matches!(self.source, Source::Map { .. })
    }

    fn is_pm(&self) -> Option<T> {
        match &self.source {
            Source::Map { map, .. } => map.alpha(),
            Source::PiecewiseLinear => None,
        }
    }

    /// Largest represented return time.
    pub fn max_return(&self) -> usize {
        self.cells.iter().map(|c| c.r).max().unwrap_or(0)
    }

    /// Total represented mass `Σ_j μ_Y(Y_j)`.
    pub fn represented_mass(&self) -> T {
        self.suffix[0]
    }

    pub fn tail_mass(&self) -> T {
        self.tail.map_or(T::zero(), |t| t.mass)
    }

    /// `∫ r dμ_Y` over represented cells only.
    pub fn represented_mean_return(&self) -> T {
        self.cells.iter().map(|c| T::from_usize_lossy(c.r) * c.weight).sum()
    }

    /// Mean return time `r̄`, including the extrapolated tail.
    pub fn mean_return(&self) -> T {
        self.represented_mean_return() + self.tail.map_or(T::zero(), |t| t.r_mass)
    }

    /// Density of `μ_Y` with respect to Lebesgue measure on `Y`.
    pub fn density(&self, y: T) -> T {
        match &self.density {
            Density::Uniform => T::one() / (self.base.1 - self.base.0),
            Density::Smooth { rho, .. } => rho.eval(y),
        }
    }

    /// `μ_Y([a, b])` for `[a, b] ⊂ Y`.
    pub fn measure(&self, a: T, b: T) -> T {
        density_measure(&self.density, self.base, a, b)
    }

    /// Index of the cell containing `y`, or `None` if `y` lies in the unrepresented tail.
    pub fn locate(&self, y: T) -> Result<Option<usize>> {
        let (a, b) = self.base;
        if !(y >= a && y <= b) {
            return Err(Error::Domain(format!("{y} is outside the base [{a}, {b}]")));
        }
        if y == b {
            // the closed right end belongs to the cell touching it
            return Ok(self.cells.iter().position(|c| c.right == b));
        }
        if let Some(t) = &self.tail {
            if y >= t.left && y < t.right {
                return Ok(None);
            }
        }
        match &self.source {
            Source::Map { levels, .. } if !levels.is_empty() => {
                // cells are ordered right to left
                let idx = self.cells.partition_point(|c| c.left > y);
                Ok((idx < self.cells.len()).then_some(idx))
            }
            _ => {
                let idx = self.cells.partition_point(|c| c.right <= y);
                Ok((idx < self.cells.len()).then_some(idx))
            }
        }
    }

    /// Applies the induced map: returns `(r(y), F y)`.
    pub fn induced_step(&self, y: T) -> Result<(usize, T)> {
        match &self.source {
            Source::Map { map, .. } => {
                let (a, b) = self.base;
                if !(y >= a && y <= b) {
                    return Err(Error::Domain(format!("{y} is outside the base")));
                }
                let mut z = map.evaluate(y)?;
                let mut r = 1usize;
                while z < a {
                    z = map.evaluate(z)?;
                    r += 1;
                    if r > 100_000_000 {
                        return Err(Error::numeric("orbit failed to return to the base", z.as_f64()));
                    }
                }
                Ok((r, z))
            }
            Source::PiecewiseLinear => {
                let idx = self.locate(y)?.expect("piecewise-linear maps have no tail");
                let c = &self.cells[idx];
                Ok((c.r, ((y - c.left) / (c.right - c.left)).min(T::one())))
            }
        }
    }

    /// Calls `f(idx, y, |dy/dx|)` for `y = F_idx^{-1}(x)`, `idx < count`.
    pub fn for_each_inverse<F: FnMut(usize, T, T)>(&self, x: T, count: usize, mut f: F) {
        let count = count.min(self.cells.len());
        match self.is_pm() {
            Some(alpha) => {
                let half = T::lit(0.5);
                let two = T::lit(2.0);
                let mut z = x;
                let mut jac = T::one();
                for idx in 0..count {
                    if idx > 0 {
                        z = pm_left_inverse(alpha, z);
                        jac = jac / (T::one() + (T::one() + alpha) * (two * z).powf(alpha));
                    }
                    f(idx, (T::one() + z) * half, jac * half);
                }
            }
            None => {
                let (a, b) = self.base;
                let u = (x - a) / (b - a);
                for (idx, c) in self.cells.iter().take(count).enumerate() {
                    let w = c.right - c.left;
                    f(idx, c.left + w * u, w / (b - a));
                }
            }
        }
    }

    /// `F_idx^{-1}(x)` together with its Lebesgue Jacobian `g_j(x)`.
    pub fn inverse_branch(&self, idx: usize, x: T) -> (T, T) {
        let mut out = (T::zero(), T::zero());
        self.for_each_inverse(x, idx + 1, |i, y, d| {
            if i == idx {
                out = (y, d);
            }
        });
        out
    }

    /// Projected column orbit `T^ℓ(F_idx^{-1} x)` for `0 ≤ ℓ < r`, computed
    /// through inverse chains so it stays accurate near the indifferent point.
    pub fn column_orbit(&self, idx: usize, x: T) -> Vec<T> {
        let c = &self.cells[idx];
        match self.is_pm() {
            Some(alpha) => {
                let mut chain = Vec::with_capacity(c.r);
                let mut z = x;
                chain.push(z);
                for _ in 1..c.r {
                    z = pm_left_inverse(alpha, z);
                    chain.push(z);
                }
                // chain[m] = z_m; T^ℓ y = z_{r-ℓ} for ℓ ≥ 1
                let mut out = Vec::with_capacity(c.r);
                out.push((T::one() + chain[c.r - 1]) * T::lit(0.5));
                for l in 1..c.r {
                    out.push(chain[c.r - l]);
                }
                out
            }
            None => {
                let y = self.inverse_branch(idx, x).0;
                match &self.source {
                    Source::Map { map, .. } => {
                        let mut out = vec![y];
                        for _ in 1..c.r {
                            let last = *out.last().unwrap();
                            out.push(map.evaluate(last).unwrap_or(last));
                        }
                        out
                    }
                    Source::PiecewiseLinear => vec![y; c.r],
                }
            }
        }
    }

    /// `μ_Y(r > n)` with represented and extrapolated parts.
    pub fn return_time_tail(&self, n: usize) -> TailValue<T> {
        // cells are sorted by nondecreasing r except for piecewise-linear inputs
        let partial: T = if self.is_pm().is_some() {
            let i = n.min(self.cells.len());
            self.suffix[i]
        } else {
            self.cells.iter().filter(|c| c.r > n).map(|c| c.weight).sum()
        };
        let extrapolated = match (&self.tail, self.declared) {
            (Some(t), Some(d)) => {
                let last = T::from_usize_lossy(t.first_r - 1);
                let nn = T::from_usize_lossy(n);
                if nn <= last {
                    t.mass
                } else {
                    t.mass * (last / nn).powf(d.beta + T::one())
                }
            }
            (Some(t), None) => {
                if n < t.first_r {
                    t.mass
                } else {
                    T::zero()
                }
            }
            _ => T::zero(),
        };
        TailValue { partial, extrapolated, total: partial + extrapolated }
    }

    /// `μ_Y(r ≥ k)` on represented cells only.
    pub fn represented_tail_ge(&self, k: usize) -> T {
        if k == 0 {
            return self.represented_mass();
        }
        if self.is_pm().is_some() {
            self.suffix[(k - 1).min(self.cells.len())]
        } else {
            self.cells.iter().filter(|c| c.r >= k).map(|c| c.weight).sum()
        }
    }

    /// Fits `log μ_Y(r > n)` against `log n` (and `log log n` when `with_log`).
    pub fn fit_tail_exponent(&self, n_min: usize, n_max: usize, with_log: bool) -> Result<TailFit<T>> {
        if n_min < 1 || n_max < 4 * n_min {
            return Err(Error::Parameter(format!(
                "tail window needs n_max >= 4 n_min >= 4, got [{n_min}, {n_max}]"
            )));
        }
        let ns = log_grid(n_min, n_max, 40);
        let vals: Vec<T> = ns.iter().map(|&n| self.return_time_tail(n).total).collect();
        if vals.iter().any(|&v| v <= T::zero()) {
            return Ok(TailFit::ExponentialTail);
        }
        let xs: Vec<T> = ns.iter().map(|&n| T::from_usize_lossy(n)).collect();
        Ok(TailFit::PowerLaw(fit_power_law(&xs, &vals, with_log)?))
    }

    /// Checks bijectivity, expansion, backward contraction and distortion on
    /// `pairs` deterministic sample pairs for a selection of cells.
    pub fn check_conditions(&self, pairs: usize) -> ConditionReport<T> {
        let (a, b) = self.base;
        let n = self.cells.len();
        let mut idxs: Vec<usize> = (0..n.min(40)).collect();
        for extra in [n / 2, n.saturating_sub(1)] {
            if !idxs.contains(&extra) {
                idxs.push(extra);
            }
        }
        let golden = T::lit(0.618_033_988_749_894_9);
        let sqrt2 = T::lit(0.414_213_562_373_095_1);
        let frac = |v: T| v - v.floor();
        let mut rep = ConditionReport {
            cells_checked: idxs.len(),
            endpoint_error: T::zero(),
            min_expansion: T::infinity(),
            max_backward_ratio: T::zero(),
            fitted_distortion: T::zero(),
            declared_distortion: self.distortion,
            lambda: self.lambda,
        };
        for &idx in &idxs {
            let c = self.cells[idx];
            let (lo, _) = self.inverse_branch(idx, a);
            let (hi, _) = self.inverse_branch(idx, b);
            let (cl, cr) = if lo < hi { (lo, hi) } else { (hi, lo) };
            rep.endpoint_error = rep
                .endpoint_error
                .max((cl - c.left).abs())
                .max((cr - c.right).abs());
            for k in 1..=pairs {
                let kf = T::from_usize_lossy(k);
                let u = a + (b - a) * frac(kf * golden);
                let v = a + (b - a) * frac(kf * sqrt2 + T::lit(0.5));
                if u == v {
                    continue;
                }
                let (x, gx) = self.inverse_branch(idx, u);
                let (y, gy) = self.inverse_branch(idx, v);
                let d_img = (u - v).abs();
                let d = (x - y).abs();
                if d > T::zero() {
                    rep.min_expansion = rep.min_expansion.min(d_img / d);
                }
                if self.has_projection() {
                    let ox = self.column_orbit(idx, u);
                    let oy = self.column_orbit(idx, v);
                    for (p, q) in ox.iter().zip(&oy) {
                        rep.max_backward_ratio = rep.max_backward_ratio.max((*p - *q).abs() / d_img);
                    }
                }
                let dist = (gx.ln() - gy.ln()).abs() / d_img.powf(self.eta);
                rep.fitted_distortion = rep.fitted_distortion.max(dist);
            }
        }
        rep
    }

    /// Writes `(j, r, left, right, weight)` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "r", "left", "right", "weight"])?;
        for c in &self.cells {
            w.write_record([
                c.j.to_string(),
                c.r.to_string(),
                format!("{:e}", c.left.as_f64()),
                format!("{:e}", c.right.as_f64()),
                format!("{:e}", c.weight.as_f64()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn density_measure<T: Real>(density: &Density<T>, base: (T, T), a: T, b: T) -> T {
    match density {
        Density::Uniform => (b - a) / (base.1 - base.0),
        Density::Smooth { rho, phi } => {
            if b - a < T::lit(1e-3) * (base.1 - base.0) {
                GaussLegendre::<T>::new(8).integrate(a, b, |x| rho.eval(x))
            } else {
                phi.eval(b) - phi.eval(a)
            }
        }
    }
}

/// Invariant density of the intermittent first-return map on `[1/2, 1]` as a
/// Chebyshev series, by fixed-point iteration of the induced transfer operator.
fn pm_density<T: Real>(alpha: T) -> Result<Density<T>> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let c = two.powf(alpha);
    let nodes = Chebyshev::nodes(half, T::one(), DENSITY_NODES);
    let q = nodes.len();
    let j0 = DENSITY_EXACT_BRANCHES;
    let mut pre = vec![Vec::with_capacity(j0); q];
    let mut moments = vec![[T::zero(); 3]; q];
    for (qi, &x) in nodes.iter().enumerate() {
        let mut z = x;
        let mut jac = T::one();
        for m in 0..DENSITY_HORIZON {
            if m > 0 {
                z = pm_left_inverse(alpha, z);
                jac = jac / (T::one() + (T::one() + alpha) * (two * z).powf(alpha));
            }
            let y = (T::one() + z) * half;
            let d = jac * half;
            if m < j0 {
                pre[qi].push((y, d));
            } else {
                let dy = y - half;
                moments[qi][0] = moments[qi][0] + d;
                moments[qi][1] = moments[qi][1] + d * dy;
                moments[qi][2] = moments[qi][2] + d * dy * dy;
            }
        }
        // branches beyond the horizon, from z_{m+1}^{-α} ≈ z_m^{-α} + α 2^α
        let rest = jac * half * (T::one() / (c * z.powf(alpha)) - half);
        moments[qi][0] = moments[qi][0] + rest.max(T::zero());
    }
    let mut values = vec![T::one() * two; q];
    let mut residual = T::infinity();
    for _ in 0..2000 {
        let cheb = Chebyshev::fit(half, T::one(), &values);
        let d1 = cheb.derivative();
        let d2 = d1.derivative();
        let (r0, r1, r2) = (cheb.eval(half), d1.eval(half), d2.eval(half) * half);
        let mut next: Vec<T> = (0..q)
            .map(|qi| {
                let exact: T = pre[qi].iter().map(|&(y, d)| cheb.eval(y) * d).sum();
                let m = moments[qi];
                exact + r0 * m[0] + r1 * m[1] + r2 * m[2]
            })
            .collect();
        let total = Chebyshev::fit(half, T::one(), &next).antiderivative().eval(T::one());
        for v in next.iter_mut() {
            *v = *v / total;
        }
        residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        values = next;
        if residual <= T::epsilon() * T::lit(256.0) {
            break;
        }
    }
    if residual > T::epsilon() * T::lit(1e4) {
        return Err(Error::numeric("invariant density iteration did not converge", residual.as_f64()));
    }
    let rho = Chebyshev::fit(half, T::one(), &values);
    let phi = rho.antiderivative();
    Ok(Density::Smooth { rho, phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn evaluates_branches() {
        let pm = MapModel::pomeau_manneville(0.5).unwrap();
        assert_eq!(pm.evaluate(0.75).unwrap(), 0.5);
        assert_eq!(pm.evaluate(0.0).unwrap(), 0.0);
        assert_eq!(pm.evaluate(0.5).unwrap(), 0.0);
        assert!(pm.evaluate(1.5).is_err());
        let d = MapModel::<f64>::doubling();
        assert_relative_eq!(d.evaluate(0.3).unwrap(), 0.6);
        assert!(pm.inverse_roundtrip_error(1000) < 1e-12);
        assert!(MapModel::pomeau_manneville(1.0).is_err());
    }

    #[test]
    fn left_inverse_is_accurate_near_zero() {
        for &y in &[1e-300, 1e-12, 1e-6, 0.3, 1.0] {
            let x = pm_left_inverse(0.8f64, y);
            let back = x * (1.0 + (2.0 * x).powf(0.8));
            assert!((back - y).abs() <= 1e-14 * y, "{y} {back}");
        }
    }

    #[test]
    fn pm_density_matches_transfer_fixed_point() {
        let pm = MapModel::pomeau_manneville(0.5).unwrap();
        let ind = InducedMap::induce(&pm, (0.5, 1.0), 400).unwrap();
        assert_relative_eq!(ind.represented_mass() + ind.tail_mass(), 1.0, epsilon = 1e-10);
        // direct evaluation of Σ_j ρ(F_j^{-1}x) g_j(x) at a non-node point
        let x = 0.7131;
        let mut s = 0.0f64;
        ind.for_each_inverse(x, 400, |_, y, d| s += ind.density(y) * d);
        // branches beyond 400 carry mass of order x_400
        assert!((s - ind.density(x)).abs() < 1e-4);
        assert!(s <= ind.density(x));
    }
}

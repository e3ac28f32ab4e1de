use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::roof::{Observable, Roof};
use crate::suspension::{correlation_mc, CorrelationSeries, FlowSystem};

use super::operator::ZERO;
use super::tower_op::TowerOperator;

/// `ρ̂(s)` split into its pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceValue {
    pub s: Complex64,
    pub value: Complex64,
    /// `Σ_{n≥1} ∫ L_{-s}^n v_s · w_s dμ_Δ'`.
    pub series: Complex64,
    /// Contribution of orbits that cross no roof.
    pub zeroth: Complex64,
    pub mean_v: f64,
    pub mean_w: f64,
    pub mean_roof: f64,
    pub terms: usize,
    pub last_term: f64,
}

/// Laplace transform `ρ̂(s) = ∫_0^∞ e^{-st} ρ(t) dt` of the flow correlation on
/// the discretized truncated tower, through the operator series.
pub fn laplace_series(
    op: &TowerOperator,
    roof: &Roof,
    v: &Observable,
    w: &Observable,
    s: Complex64,
    max_terms: usize,
) -> Result<LaplaceValue> {
    if s == ZERO {
        return Err(Error::Parameter("the transform is taken at s ≠ 0".into()));
    }
    let gl = GaussLegendre::<f64>::new(16);
    let vs = op.state_average(|x| {
        let h = roof.eval(x);
        let mut acc = ZERO;
        for (u, q) in gl.mapped(0.0, h) {
            acc += (s * u).exp() * v.eval(x, u, h) * q;
        }
        acc
    });
    let ws = op.state_average(|x| {
        let h = roof.eval(x);
        let mut acc = ZERO;
        for (u, q) in gl.mapped(0.0, h) {
            acc += (-s * u).exp() * w.eval(x, u, h) * q;
        }
        acc
    });
    // ∫∫_{0 ≤ u ≤ τ < h} e^{-s(τ-u)} v(x,u) w(x,τ)
    let zeroth_state = op.state_average(|x| {
        let h = roof.eval(x);
        let mut acc = ZERO;
        for (tau, qt) in gl.mapped(0.0, h) {
            let mut inner = ZERO;
            for (u, qu) in gl.mapped(0.0, tau) {
                inner += (-s * (tau - u)).exp() * v.eval(x, u, h) * qu;
            }
            acc += inner * w.eval(x, tau, h) * qt;
        }
        acc
    });
    let moment = |f: &dyn Fn(f64, f64, f64) -> f64| {
        op.state_average(|x| {
            let h = roof.eval(x);
            Complex64::new(gl.mapped(0.0, h).map(|(u, q)| f(x, u, h) * q).sum(), 0.0)
        })
    };
    let one = vec![Complex64::new(1.0, 0.0); op.n_states()];
    let hbar = op.pair(&moment(&|_, _, _| 1.0), &one).re;
    let mean_v = op.pair(&moment(&|x, u, h| v.eval(x, u, h)), &one).re / hbar;
    let mean_w = op.pair(&moment(&|x, u, h| w.eval(x, u, h)), &one).re / hbar;
    let zeroth = op.pair(&zeroth_state, &one);

    let twisted = op.twisted(roof, -s);
    let mut x = vs;
    let mut series = ZERO;
    let mut small = 0;
    let mut sizes = Vec::new();
    let mut terms = 0;
    let mut last = f64::INFINITY;
    while terms < max_terms {
        x = twisted.apply(&x);
        terms += 1;
        let term = twisted.pair(&x, &ws);
        series += term;
        last = term.norm();
        sizes.push(x.iter().map(|c| c.norm()).fold(0.0, f64::max));
        if last < 1e-12 * series.norm().max(1.0) {
            small += 1;
            if small >= 5 {
                break;
            }
        } else {
            small = 0;
        }
    }
    if small < 5 {
        let k = sizes.len();
        let growth = (sizes[k - 1].max(1e-300) / sizes[k / 2].max(1e-300)).ln() / (k - 1 - k / 2).max(1) as f64;
        return Err(Error::numeric(
            format!("series diverges at s = {s}; estimated abscissa Re s ≈ {:.4}", s.re + growth / roof.inf()),
            last,
        ));
    }
    let value = (zeroth + series) / hbar - Complex64::new(mean_v * mean_w, 0.0) / s;
    Ok(LaplaceValue { s, value, series, zeroth, mean_v, mean_w, mean_roof: hbar, terms, last_term: last })
}

/// Quadrature Laplace transform of a Monte-Carlo correlation function.
#[derive(Debug, Clone)]
pub struct LaplaceMc {
    pub value: Complex64,
    /// Sum of per-node standard errors weighted by `|e^{-st}|`; conservative.
    pub stderr: f64,
    pub series: CorrelationSeries,
}

/// `∫_0^{t_max} e^{-st} ρ(t) dt` with `ρ` estimated at Gauss–Legendre nodes.
pub fn laplace_mc(
    sys: &FlowSystem,
    v: &Observable,
    w: &Observable,
    s: Complex64,
    t_max: f64,
    panels: usize,
    n_samples: usize,
    seed: u64,
) -> Result<LaplaceMc> {
    let gl = GaussLegendre::<f64>::new(16);
    let mut nodes = Vec::new();
    for p in 0..panels {
        let a = t_max * p as f64 / panels as f64;
        let b = t_max * (p + 1) as f64 / panels as f64;
        nodes.extend(gl.mapped(a, b));
    }
    let grid: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let series = correlation_mc(sys, v, w, &grid, n_samples, seed)?;
    let mut value = ZERO;
    let mut stderr = 0.0;
    for (i, &(t, q)) in nodes.iter().enumerate() {
        let k = (-s * t).exp() * q;
        value += k * series.rho[i];
        stderr += k.norm() * series.stderr[i];
    }
    Ok(LaplaceMc { value, stderr, series })
}

/// Map-level correlation `∫ v·w∘T^n dν - ∫v dν ∫w dν` from iterates of the
/// untwisted tower operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCorrelation {
    pub n: Vec<usize>,
    pub corr: Vec<f64>,
}

impl MapCorrelation {
    /// Correlation series on integer times, with zero standard errors.
    pub fn as_series(&self) -> CorrelationSeries {
        CorrelationSeries {
            t: self.n.iter().map(|&n| n as f64).collect(),
            rho: self.corr.clone(),
            stderr: vec![0.0; self.n.len()],
            n_samples: 0,
            seed: 0,
        }
    }
}

pub fn map_correlation_operator<V, W>(op: &TowerOperator, v: V, w: W, n_max: usize) -> MapCorrelation
where
    V: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    let vv = op.state_average(|x| Complex64::new(v(x), 0.0));
    let ww = op.state_average(|x| Complex64::new(w(x), 0.0));
    let one = vec![Complex64::new(1.0, 0.0); op.n_states()];
    let mv = op.pair(&vv, &one).re;
    let mw = op.pair(&ww, &one).re;
    let mut x = vv;
    let mut n = Vec::with_capacity(n_max + 1);
    let mut corr = Vec::with_capacity(n_max + 1);
    for k in 0..=n_max {
        if k > 0 {
            x = op.apply(&x);
        }
        n.push(k);
        corr.push(op.pair(&x, &ww).re - mv * mw);
    }
    MapCorrelation { n, corr }
}

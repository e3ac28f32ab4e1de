//! Roof functions on the interval and observables on the suspension.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::maps::MapModel;

#[derive(Debug, Clone)]
enum RoofKind {
    Constant(f64),
    /// `base + amp·cos(2πx)`.
    Cosine { base: f64, amp: f64 },
    /// `1 + x^{-1/(β+1)}`.
    Singular { beta: f64 },
    /// `h + u∘T - u` with `u = eps·sin(2πx)`.
    Coboundary { inner: Box<RoofKind>, map: MapModel<f64>, eps: f64 },
}

/// Roof function `h: X → (0, ∞)`.
#[derive(Debug, Clone)]
pub struct Roof {
    kind: RoofKind,
}

impl Roof {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("constant roof must be positive, got {c}")));
        }
        Ok(Self { kind: RoofKind::Constant(c) })
    }

    pub fn cosine(base: f64, amp: f64) -> Result<Self> {
        if base - amp.abs() <= 0.0 {
            return Err(Error::Parameter("roof must be bounded below by a positive constant".into()));
        }
        Ok(Self { kind: RoofKind::Cosine { base, amp } })
    }

    pub fn singular(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Parameter(format!("singular roof needs beta > 0, got {beta}")));
        }
        Ok(Self { kind: RoofKind::Singular { beta } })
    }

    /// The cohomologous roof `h + u∘T - u`, `u(x) = eps·sin(2πx)`.
    pub fn coboundary(&self, map: &MapModel<f64>, eps: f64) -> Result<Self> {
        if !self.is_bounded() || self.inf() <= 4.0 * eps.abs() {
            return Err(Error::Parameter("coboundary perturbation would break positivity".into()));
        }
        Ok(Self {
            kind: RoofKind::Coboundary { inner: Box::new(self.kind.clone()), map: map.clone(), eps },
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_kind(&self.kind, x)
    }

    pub fn inf(&self) -> f64 {
        inf_kind(&self.kind)
    }

    /// `|h|_∞`, infinite for unbounded roofs.
    pub fn sup(&self) -> f64 {
        sup_kind(&self.kind)
    }

    pub fn is_bounded(&self) -> bool {
        self.sup().is_finite()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, RoofKind::Constant(_))
    }

    /// Lipschitz constant (Hölder exponent 1) on any interval avoiding the singularity.
    pub fn lipschitz(&self) -> f64 {
        lip_kind(&self.kind)
    }

    /// Declared `β` with `μ(h > n) ≤ C n^{-(β+1)}` for unbounded roofs.
    pub fn declared_beta(&self) -> Option<f64> {
        match self.kind {
            RoofKind::Singular { beta } => Some(beta),
            _ => None,
        }
    }

    /// Lebesgue measure of `{x ∈ [0,1] : h(x) > n}`.
    pub fn superlevel_lebesgue(&self, n: f64) -> f64 {
        match self.kind {
            RoofKind::Singular { beta } => {
                if n <= 2.0 {
                    1.0
                } else {
                    (n - 1.0).powf(-(beta + 1.0))
                }
            }
            _ => {
                // bounded roofs: scan a fine grid
                let m = 100_000;
                (0..m).filter(|&i| self.eval((i as f64 + 0.5) / m as f64) > n).count() as f64 / m as f64
            }
        }
    }

    /// `∫_0^1 h dx`.
    pub fn lebesgue_mean(&self) -> f64 {
        match &self.kind {
            RoofKind::Constant(c) => *c,
            RoofKind::Cosine { base, .. } => *base,
            RoofKind::Singular { beta } => 1.0 + (beta + 1.0) / beta,
            // the coboundary integrates to zero against any T-invariant measure, not Lebesgue in general
            RoofKind::Coboundary { .. } => {
                let gl = crate::quadrature::GaussLegendre::<f64>::new(16);
                (0..256)
                    .map(|i| gl.integrate(i as f64 / 256.0, (i + 1) as f64 / 256.0, |x| self.eval(x)))
                    .sum()
            }
        }
    }

    /// Draws `x` from the density `h(x)/∫h` on `[0,1]` using two uniforms.
    pub fn sample_weighted_lebesgue(&self, u1: f64, u2: f64) -> Result<f64> {
        match self.kind {
            RoofKind::Singular { beta } => {
                let a = 1.0 / (beta + 1.0);
                let mass_sing = 1.0 / (1.0 - a);
                if u1 * (1.0 + mass_sing) < 1.0 {
                    Ok(u2)
                } else {
                    Ok(u2.powf(1.0 / (1.0 - a)))
                }
            }
            _ => Err(Error::Unsupported("weighted sampling is only needed for singular roofs".into())),
        }
    }
}

fn eval_kind(k: &RoofKind, x: f64) -> f64 {
    match k {
        RoofKind::Constant(c) => *c,
        RoofKind::Cosine { base, amp } => base + amp * (TAU * x).cos(),
        RoofKind::Singular { beta } => 1.0 + x.powf(-1.0 / (beta + 1.0)),
        RoofKind::Coboundary { inner, map, eps } => {
            let tx = map.evaluate(x.clamp(0.0, 1.0)).unwrap_or(x);
            eval_kind(inner, x) + eps * ((TAU * tx).sin() - (TAU * x).sin())
        }
    }
}

fn inf_kind(k: &RoofKind) -> f64 {
    match k {
        RoofKind::Constant(c) => *c,
        RoofKind::Cosine { base, amp } => base - amp.abs(),
        RoofKind::Singular { .. } => 2.0,
        RoofKind::Coboundary { inner, eps, .. } => inf_kind(inner) - 2.0 * eps.abs(),
    }
}

fn sup_kind(k: &RoofKind) -> f64 {
    match k {
        RoofKind::Constant(c) => *c,
        RoofKind::Cosine { base, amp } => base + amp.abs(),
        RoofKind::Singular { .. } => f64::INFINITY,
        RoofKind::Coboundary { inner, eps, .. } => sup_kind(inner) + 2.0 * eps.abs(),
    }
}

fn lip_kind(k: &RoofKind) -> f64 {
    match k {
        RoofKind::Constant(_) => 0.0,
        RoofKind::Cosine { amp, .. } => TAU * amp.abs(),
        RoofKind::Singular { .. } => f64::INFINITY,
        RoofKind::Coboundary { inner, map, eps } => {
            let dmax = if map.has_indifferent_fixed_point() { 1.0 + 2.0 } else { 2.0 };
            lip_kind(inner) + TAU * eps.abs() * (dmax + 1.0)
        }
    }
}

/// Observables `v(x, u)` on the suspension, smooth in the flow direction `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Constant(f64),
    /// `x - center`.
    Coordinate { center: f64 },
    /// `cos(2π·freq·x)`.
    Cosine { freq: f64 },
    /// `cos(2π·freq·u)`.
    FlowCosine { freq: f64 },
    /// `sin(2π u / h(x))`.
    RoofPhase,
    /// Smoothed indicator of `[a, b]` in `x` with transition width `width`.
    SmoothIndicator { a: f64, b: f64, width: f64 },
    Product(Box<Observable>, Box<Observable>),
}

impl Observable {
    /// Looks up a registry name such as `coordinate`, `cos-x`, `cos-u`,
    /// `roof-phase`, `indicator` or `const`.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "coordinate" => Observable::Coordinate { center: 0.5 },
            "cos-x" => Observable::Cosine { freq: 1.0 },
            "cos-u" => Observable::FlowCosine { freq: 1.0 },
            "roof-phase" => Observable::RoofPhase,
            "indicator" => Observable::SmoothIndicator { a: 0.0, b: 0.25, width: 0.05 },
            "const" => Observable::Constant(1.0),
            other => return Err(Error::Config(format!("unknown observable '{other}'"))),
        })
    }

    pub fn eval(&self, x: f64, u: f64, h: f64) -> f64 {
        self.derivative(0, x, u, h)
    }

    /// `∂_u^k v(x, u)` with the roof value `h = h(x)` supplied.
    pub fn derivative(&self, k: usize, x: f64, u: f64, h: f64) -> f64 {
        let u_free = |val: f64| if k == 0 { val } else { 0.0 };
        match self {
            Observable::Constant(c) => u_free(*c),
            Observable::Coordinate { center } => u_free(x - center),
            Observable::Cosine { freq } => u_free((TAU * freq * x).cos()),
            Observable::FlowCosine { freq } => trig_derivative(k, TAU * freq, u, false),
            Observable::RoofPhase => trig_derivative(k, TAU / h, u, true),
            Observable::SmoothIndicator { a, b, width } => {
                u_free(smoothstep((x - a) / width + 0.5) * smoothstep((b - x) / width + 0.5))
            }
            Observable::Product(p, q) => {
                let mut binom = 1.0;
                let mut s = 0.0;
                for i in 0..=k {
                    s += binom * p.derivative(i, x, u, h) * q.derivative(k - i, x, u, h);
                    binom = binom * (k - i) as f64 / (i + 1) as f64;
                }
                s
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Observable::Constant(c) => c.abs(),
            Observable::Coordinate { center } => center.abs().max((1.0 - center).abs()),
            Observable::Product(p, q) => p.sup() * q.sup(),
            _ => 1.0,
        }
    }

    pub fn depends_on_u(&self) -> bool {
        match self {
            Observable::FlowCosine { .. } | Observable::RoofPhase => true,
            Observable::Product(p, q) => p.depends_on_u() || q.depends_on_u(),
            _ => false,
        }
    }

    /// Sampled surrogate for `‖v‖_{m,η}`: sup of `|∂_u^k v|`, `k ≤ m`, plus the
    /// largest difference quotient in `x` on a grid, for a roof `h`.
    pub fn norm_surrogate(&self, m: usize, roof: &Roof, grid: usize) -> f64 {
        let mut total = 0.0;
        for k in 0..=m {
            let mut sup = 0.0f64;
            let mut lip = 0.0f64;
            for i in 0..grid {
                let x = (i as f64 + 0.5) / grid as f64;
                let x2 = (i as f64 + 1.5) / grid as f64;
                let h = roof.eval(x);
                let h2 = roof.eval(x2.min(1.0));
                for j in 0..8 {
                    let frac = (j as f64 + 0.5) / 8.0;
                    let a = self.derivative(k, x, frac * h, h);
                    sup = sup.max(a.abs());
                    if x2 < 1.0 {
                        let b = self.derivative(k, x2, frac * h2, h2);
                        lip = lip.max((a - b).abs() / (x2 - x));
                    }
                }
            }
            total += sup + lip;
        }
        total
    }
}

fn trig_derivative(k: usize, w: f64, u: f64, sine: bool) -> f64 {
    // d^k/du^k of cos(wu) (or sin(wu)) cycles through the four phases
    let shift = if sine { 3 } else { 0 };
    let phase = (k + shift) % 4;
    let base = match phase {
        0 => (w * u).cos(),
        1 => -(w * u).sin(),
        2 => -(w * u).cos(),
        _ => (w * u).sin(),
    };
    w.powi(k as i32) * base
}

/// `C^2` step: 0 below 0, 1 above 1.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Polynomial step of degree `2m+1` whose first `m` derivatives vanish at both ends.
pub fn blend_step(m: usize, t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    // S(t) = t^{m+1} Σ_{k=0}^{m} C(m+k, k) C(2m+1, m-k) (-t)^k
    let mut s = 0.0;
    for k in 0..=m {
        s += binomial(m + k, k) * binomial(2 * m + 1, m - k) * (-t).powi(k as i32);
    }
    t.powi(m as i32 + 1) * s
}

/// `k`-th derivative of [`blend_step`] by exact polynomial differentiation.
pub fn blend_step_derivative(m: usize, k: usize, t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    // coefficients of S in the monomial basis
    let mut coef = vec![0.0; 2 * m + 2];
    for kk in 0..=m {
        let c = binomial(m + kk, kk) * binomial(2 * m + 1, m - kk) * if kk % 2 == 0 { 1.0 } else { -1.0 };
        coef[m + 1 + kk] += c;
    }
    for _ in 0..k {
        coef = coef.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect();
        if coef.is_empty() {
            return 0.0;
        }
    }
    coef.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roofs_evaluate() {
        let r = Roof::cosine(2.0, 1.0).unwrap();
        assert_eq!(r.eval(0.0), 3.0);
        assert_eq!(r.inf(), 1.0);
        assert!(Roof::cosine(1.0, 1.0).is_err());
        let s = Roof::singular(1.0).unwrap();
        assert!((s.eval(0.25) - 3.0).abs() < 1e-15);
        assert!(!s.is_bounded());
        assert!((s.superlevel_lebesgue(3.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn blend_step_is_flat_at_both_ends() {
        for m in 1..4 {
            assert!(blend_step(m, 0.0).abs() < 1e-15);
            assert!((blend_step(m, 1.0) - 1.0).abs() < 1e-12);
            for k in 1..=m {
                assert!(blend_step_derivative(m, k, 0.0).abs() < 1e-9);
                assert!(blend_step_derivative(m, k, 1.0).abs() < 1e-9, "m={m} k={k}");
            }
            let h = 1e-6;
            let fd = (blend_step(m, 0.4 + h) - blend_step(m, 0.4 - h)) / (2.0 * h);
            assert!((fd - blend_step_derivative(m, 1, 0.4)).abs() < 1e-6);
        }
    }

    #[test]
    fn observable_derivatives() {
        let v = Observable::RoofPhase;
        let h = 2.5;
        let eps = 1e-5;
        let fd = (v.eval(0.3, 1.0 + eps, h) - v.eval(0.3, 1.0 - eps, h)) / (2.0 * eps);
        assert!((fd - v.derivative(1, 0.3, 1.0, h)).abs() < 1e-8);
        let p = Observable::Product(Box::new(Observable::Coordinate { center: 0.5 }), Box::new(Observable::FlowCosine { freq: 1.0 }));
        let fd = (p.eval(0.9, 0.2 + eps, h) - p.eval(0.9, 0.2 - eps, h)) / (2.0 * eps);
        assert!((fd - p.derivative(1, 0.9, 0.2, h)).abs() < 1e-8);
        assert!(Observable::from_name("nope").is_err());
    }
}

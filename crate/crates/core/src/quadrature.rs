//! Gauss–Legendre rules and a Chebyshev series type on a finite interval.

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = T::from_usize_lossy(n);
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let k = T::from_usize_lossy(i) + T::lit(0.75);
            let mut x = (T::PI() * k / (nf + T::lit(0.5))).cos();
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x = x - dx;
                if dx.abs() <= T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != T::zero() {
                dp = d;
            }
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let half = (b - a) * T::lit(0.5);
        let mid = (a + b) * T::lit(0.5);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<T>()
            * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) * T::lit(0.5);
        let mid = (a + b) * T::lit(0.5);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::from_usize_lossy(n);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Truncated Chebyshev expansion on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chebyshev<T> {
    pub a: T,
    pub b: T,
    pub coeffs: Vec<T>,
}

impl<T: Real> Chebyshev<T> {
    /// First-kind Chebyshev nodes on `[a, b]`, in the order `fit` expects.
    pub fn nodes(a: T, b: T, n: usize) -> Vec<T> {
        let nf = T::from_usize_lossy(n);
        (0..n)
            .map(|k| {
                let t = (T::PI() * (T::from_usize_lossy(k) + T::lit(0.5)) / nf).cos();
                (a + b) * T::lit(0.5) + (b - a) * T::lit(0.5) * t
            })
            .collect()
    }

    /// Interpolant through values sampled at [`Chebyshev::nodes`].
    pub fn fit(a: T, b: T, values: &[T]) -> Self {
        let n = values.len();
        let nf = T::from_usize_lossy(n);
        let coeffs = (0..n)
            .map(|j| {
                let jf = T::from_usize_lossy(j);
                let s: T = values
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        v * (T::PI() * jf * (T::from_usize_lossy(k) + T::lit(0.5)) / nf).cos()
                    })
                    .sum();
                let scale = if j == 0 { T::one() } else { T::lit(2.0) };
                scale * s / nf
            })
            .collect();
        Self { a, b, coeffs }
    }

    fn to_unit(&self, x: T) -> T {
        (T::lit(2.0) * x - self.a - self.b) / (self.b - self.a)
    }

    pub fn eval(&self, x: T) -> T {
        let t = self.to_unit(x);
        let mut b1 = T::zero();
        let mut b2 = T::zero();
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = T::lit(2.0) * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len();
        if n <= 1 {
            return Self {
                a: self.a,
                b: self.b,
                coeffs: vec![T::zero()],
            };
        }
        let mut d = vec![T::zero(); n + 1];
        for k in (1..n).rev() {
            d[k - 1] = d[k + 1] + T::lit(2.0) * T::from_usize_lossy(k) * self.coeffs[k];
        }
        d[0] = d[0] * T::lit(0.5);
        d.truncate(n - 1);
        let scale = T::lit(2.0) / (self.b - self.a);
        Self {
            a: self.a,
            b: self.b,
            coeffs: d.into_iter().map(|c| c * scale).collect(),
        }
    }

    /// Antiderivative vanishing at `a`.
    pub fn antiderivative(&self) -> Self {
        let n = self.coeffs.len();
        let c = |k: usize| if k < n { self.coeffs[k] } else { T::zero() };
        let mut out = vec![T::zero(); n + 1];
        for k in 1..=n {
            let kf = T::from_usize_lossy(k);
            let prev = if k == 1 { T::lit(2.0) * c(0) } else { c(k - 1) };
            out[k] = (prev - c(k + 1)) / (T::lit(2.0) * kf);
        }
        let scale = (self.b - self.a) * T::lit(0.5);
        for v in out.iter_mut() {
            *v = *v * scale;
        }
        let mut anti = Self {
            a: self.a,
            b: self.b,
            coeffs: out,
        };
        let at_a = anti.eval(self.a);
        anti.coeffs[0] = anti.coeffs[0] - at_a;
        anti
    }
}

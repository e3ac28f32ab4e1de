use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::roof::Roof;

use super::operator::{ONE, ZERO};
use super::tower_op::TowerOperator;

type CMat = DMatrix<Complex64>;

/// Operator renewal sequences `T_{s,n} = 1_Y L_s^n 1_Y` and
/// `R_{s,n} = 1_Y L_s^n 1_{Z_n}` on the base leaves of a truncated tower.
#[derive(Debug, Clone)]
pub struct RenewalData {
    pub s: Complex64,
    pub n_trunc: usize,
    /// `T_{s,n}` for `0 ≤ n ≤ horizon`.
    pub t: Vec<CMat>,
    /// `R_{s,n}` for `0 ≤ n ≤ N` (`R_{s,0} = 0`).
    pub r: Vec<CMat>,
    /// `Z_n = {r' = n}` as leaf indices, `1 ≤ n ≤ N` (index 0 unused).
    pub level_sets: Vec<Vec<usize>>,
    /// Real part of the `z` grid used for the Fourier sums.
    pub sigma: f64,
}

/// Renewal identity residual at one `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalCheck {
    pub z: Complex64,
    pub residual: f64,
}

impl RenewalData {
    pub fn horizon(&self) -> usize {
        self.t.len() - 1
    }

    /// `T_s(z) = Σ_n T_{s,n} e^{zn}` truncated at the horizon.
    pub fn t_of(&self, z: Complex64) -> CMat {
        let k = self.t[0].nrows();
        let mut acc = CMat::zeros(k, k);
        for (n, m) in self.t.iter().enumerate() {
            acc += m * (z * n as f64).exp();
        }
        acc
    }

    /// `R_s(z) = Σ_{n=1}^N R_{s,n} e^{zn}`.
    pub fn r_of(&self, z: Complex64) -> CMat {
        let k = self.t[0].nrows();
        let mut acc = CMat::zeros(k, k);
        for (n, m) in self.r.iter().enumerate().skip(1) {
            acc += m * (z * n as f64).exp();
        }
        acc
    }

    /// `‖T_s(z) - (I - R_s(z))^{-1}‖_F / ‖(I - R_s(z))^{-1}‖_F`.
    pub fn check(&self, z: Complex64) -> Result<RenewalCheck> {
        let k = self.t[0].nrows();
        let a = CMat::identity(k, k) - self.r_of(z);
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::numeric("I - R_s(z) is singular", 0.0))?;
        let diff = self.t_of(z) - &inv;
        Ok(RenewalCheck { z, residual: diff.norm() / inv.norm() })
    }

    /// Residuals at `z = σ + 2πik/points`, `k < points`.
    pub fn check_grid(&self, points: usize) -> Result<Vec<RenewalCheck>> {
        (0..points)
            .map(|k| {
                let omega = std::f64::consts::TAU * k as f64 / points as f64;
                self.check(Complex64::new(self.sigma, omega))
            })
            .collect()
    }
}

/// Builds `T_{s,n}` and `R_{s,n}` by iterating `L_s` on the truncated tower
/// until `‖T_{s,n}‖ e^{σn}` falls below `1e-10`.
pub fn renewal_build(op: &TowerOperator, roof: &Roof, max_horizon: usize) -> Result<RenewalData> {
    let n_trunc = op
        .n_trunc()
        .ok_or_else(|| Error::Parameter("renewal sequences need a truncated tower".into()))?;
    let s = op.s();
    let sigma = -(s.re.max(0.0) * roof.sup() + 0.5);
    let cols = op.columns();
    let k = cols.len();
    let base = op.base_states();
    let mut level_sets = vec![Vec::new(); n_trunc + 1];
    for (e, c) in cols.iter().enumerate() {
        level_sets[c.height].push(e);
    }
    let mut vecs: Vec<Vec<Complex64>> = (0..k)
        .map(|e| {
            let mut v = vec![ZERO; op.n_states()];
            v[base[e]] = ONE;
            v
        })
        .collect();
    let restrict = |vecs: &[Vec<Complex64>]| CMat::from_fn(k, k, |i, j| vecs[j][base[i]]);
    let mut t = vec![restrict(&vecs)];
    let mut r = vec![CMat::zeros(k, k)];
    let mut n = 0;
    loop {
        n += 1;
        if n > max_horizon {
            return Err(Error::numeric(
                format!("renewal horizon {max_horizon} too small for Fourier accuracy"),
                t.last().map_or(0.0, |m| m.norm()),
            ));
        }
        for v in vecs.iter_mut() {
            *v = op.apply(v);
        }
        let tn = restrict(&vecs);
        if n <= n_trunc {
            let mut rn = CMat::zeros(k, k);
            for &e in &level_sets[n] {
                rn.set_column(e, &tn.column(e));
            }
            r.push(rn);
        }
        let size = tn.norm() * (sigma * n as f64).exp();
        t.push(tn);
        if n >= n_trunc && size < 1e-10 {
            break;
        }
    }
    Ok(RenewalData { s, n_trunc, t, r, level_sets, sigma })
}

/// Identity check for `L_s^n = Σ_{i+j+k=n} A_{s,i} T_{s,j} B_{s,k} + E_{s,n}`
/// with the norm estimates of each family.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub n: usize,
    pub n_trunc: usize,
    pub residual: f64,
    /// `‖A_{s,i}‖` from `L^∞(Y)` to `L^1(Δ')`, `0 ≤ i ≤ max(n, N + 1)`.
    pub a_norms: Vec<f64>,
    /// `‖B_{s,k}‖` on `L^∞`.
    pub b_norms: Vec<f64>,
    /// `‖E_{s,i}‖` from `L^∞(Δ')` to `L^1(Δ')`.
    pub e_norms: Vec<f64>,
    /// `μ_Y(r' ≥ i)`.
    pub tail: Vec<f64>,
    /// Fitted constants for the three estimates with factor `N^{ε'}`.
    pub c_a: f64,
    pub c_b: f64,
    pub c_e: f64,
    /// `A`, `B`, `E` are identically zero beyond `N`.
    pub vanish_beyond: bool,
}

/// Assembles the decomposition on the dense state space of a truncated tower.
pub fn tower_operator_decomposition(op: &TowerOperator, n: usize, eps: f64, roof: &Roof) -> Result<DecompositionReport> {
    if n == 0 {
        return Err(Error::Parameter("decomposition needs n ≥ 1".into()));
    }
    let n_trunc = op
        .n_trunc()
        .ok_or_else(|| Error::Parameter("decomposition needs a truncated tower".into()))?;
    let ns = op.n_states();
    let base = op.base_states();
    let k = base.len();
    let mut is_base = vec![false; ns];
    for &b in &base {
        is_base[b] = true;
    }
    let top = n.max(n_trunc + 1);
    let unit = |i: usize| {
        let mut v = vec![ZERO; ns];
        v[i] = ONE;
        v
    };
    let to_mat = |cols: &[Vec<Complex64>], rows: usize, pick: &dyn Fn(usize) -> usize| {
        CMat::from_fn(rows, cols.len(), |i, j| cols[j][pick(i)])
    };
    let all = |i: usize| i;
    let on_base = |i: usize| base[i];
    let masked = |v: &[Complex64]| {
        let mut w = op.apply(v);
        for (i, x) in w.iter_mut().enumerate() {
            if is_base[i] {
                *x = ZERO;
            }
        }
        w
    };
    // A_i = (P_c L)^i P_Y, T_j = P_Y L^j P_Y
    let mut a = Vec::with_capacity(top + 1);
    let mut t = Vec::with_capacity(n + 1);
    let mut va: Vec<Vec<Complex64>> = base.iter().map(|&b| unit(b)).collect();
    let mut vt = va.clone();
    a.push(to_mat(&va, ns, &all));
    t.push(to_mat(&vt, k, &on_base));
    for i in 1..=top {
        va = va.iter().map(|v| masked(v)).collect();
        a.push(to_mat(&va, ns, &all));
        if i <= n {
            vt = vt.iter().map(|v| op.apply(v)).collect();
            t.push(to_mat(&vt, k, &on_base));
        }
    }
    // E_i = (P_c L)^i P_c and B_k = P_Y L E_{k-1}, as columns over all states
    let mut ve: Vec<Vec<Complex64>> = (0..ns).map(|j| if is_base[j] { vec![ZERO; ns] } else { unit(j) }).collect();
    let mut e = vec![to_mat(&ve, ns, &all)];
    let mut b = vec![CMat::from_fn(k, ns, |i, j| if base[i] == j { ONE } else { ZERO })];
    for _ in 1..=top {
        let lv: Vec<Vec<Complex64>> = ve.iter().map(|v| op.apply(v)).collect();
        b.push(to_mat(&lv, k, &on_base));
        ve = lv
            .into_iter()
            .map(|mut w| {
                for (i, x) in w.iter_mut().enumerate() {
                    if is_base[i] {
                        *x = ZERO;
                    }
                }
                w
            })
            .collect();
        e.push(to_mat(&ve, ns, &all));
    }
    let mut vl: Vec<Vec<Complex64>> = (0..ns).map(unit).collect();
    for _ in 0..n {
        vl = vl.iter().map(|v| op.apply(v)).collect();
    }
    let lpow = to_mat(&vl, ns, &all);
    // C_m = Σ_{j+k=m} T_j B_k, then Σ_i A_i C_{n-i}
    let mut recon = e[n].clone();
    for i in 0..=n {
        let m = n - i;
        let mut c = CMat::zeros(k, ns);
        for j in 0..=m {
            c += &t[j] * &b[m - j];
        }
        recon += &a[i] * c;
    }
    let residual = (&lpow - &recon).norm() / lpow.norm().max(f64::MIN_POSITIVE);

    let meas = op.state_measure();
    let to_l1 = |m: &CMat| -> f64 {
        (0..m.nrows()).map(|i| meas[i] * m.row(i).iter().map(|x| x.norm()).sum::<f64>()).sum()
    };
    let to_inf = |m: &CMat| -> f64 {
        (0..m.nrows()).map(|i| m.row(i).iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
    };
    let a_norms: Vec<f64> = a.iter().map(to_l1).collect();
    let b_norms: Vec<f64> = b.iter().map(to_inf).collect();
    let e_norms: Vec<f64> = e.iter().map(to_l1).collect();
    let tail: Vec<f64> = (0..=top).map(|i| op.return_tail_ge(i)).collect();
    let factor = (n_trunc as f64).powf(eps * roof.sup());
    let mut c_a = 0.0f64;
    let mut c_b = 0.0f64;
    let mut c_e = 0.0f64;
    for i in 1..=top {
        let u = tail[i];
        let sum_u: f64 = (i..=n_trunc).map(|k| tail[k]).sum();
        if u > 0.0 {
            c_a = c_a.max(a_norms[i] / (factor * u));
            c_b = c_b.max(b_norms[i] / (factor * i as f64 * u));
        }
        if sum_u > 0.0 {
            c_e = c_e.max(e_norms[i] / (factor * sum_u));
        }
    }
    let zero = |m: &CMat| m.iter().all(|x| *x == ZERO);
    let vanish_beyond = (n_trunc + 1..=top).all(|i| zero(&a[i]) && zero(&b[i]) && zero(&e[i]));
    Ok(DecompositionReport { n, n_trunc, residual, a_norms, b_norms, e_norms, tail, c_a, c_b, c_e, vanish_beyond })
}

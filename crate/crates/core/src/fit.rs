//! Least-squares regression and power-law fits.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ordinary least-squares solution.
#[derive(Debug, Clone)]
pub struct LinearFit<T> {
    pub coeffs: Vec<T>,
    /// Standard errors of the coefficients.
    pub stderr: Vec<T>,
    /// Root-mean-square residual.
    pub residual: T,
}

/// Solves `min |X c - y|` for a design matrix with a handful of columns.
pub fn least_squares<T: Real>(rows: &[Vec<T>], y: &[T]) -> Result<LinearFit<T>> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return Err(Error::Parameter("least squares needs matching nonempty data".into()));
    }
    let k = rows[0].len();
    if n < k {
        return Err(Error::Parameter(format!("{n} points cannot determine {k} coefficients")));
    }
    // normal equations, solved by Gauss-Jordan with partial pivoting
    let mut a = vec![vec![T::zero(); k]; k];
    let mut rhs = vec![T::zero(); k];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..k {
            rhs[i] = rhs[i] + row[i] * yi;
            for j in 0..k {
                a[i][j] = a[i][j] + row[i] * row[j];
            }
        }
    }
    let mut inv = vec![vec![T::zero(); k]; k];
    for (i, r) in inv.iter_mut().enumerate() {
        r[i] = T::one();
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() <= T::epsilon() {
            return Err(Error::numeric("singular design matrix", 0.0));
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        rhs.swap(col, piv);
        let d = a[col][col];
        for j in 0..k {
            a[col][j] = a[col][j] / d;
            inv[col][j] = inv[col][j] / d;
        }
        rhs[col] = rhs[col] / d;
        for i in 0..k {
            if i != col {
                let f = a[i][col];
                for j in 0..k {
                    a[i][j] = a[i][j] - f * a[col][j];
                    inv[i][j] = inv[i][j] - f * inv[col][j];
                }
                rhs[i] = rhs[i] - f * rhs[col];
            }
        }
    }
    let sse: T = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let pred: T = row.iter().zip(&rhs).map(|(&x, &c)| x * c).sum();
            (yi - pred) * (yi - pred)
        })
        .sum();
    let dof = if n > k { n - k } else { 1 };
    let sigma2 = sse / T::from_usize_lossy(dof);
    let stderr = (0..k).map(|i| (sigma2 * inv[i][i]).abs().sqrt()).collect();
    Ok(LinearFit {
        coeffs: rhs,
        stderr,
        residual: (sse / T::from_usize_lossy(n)).sqrt(),
    })
}

/// Fit of `y ≈ A · x^{-exponent} · (ln x)^{log_exponent}`.
#[derive(Debug, Clone)]
pub struct PowerLawFit<T> {
    pub exponent: T,
    pub log_exponent: Option<T>,
    pub prefactor: T,
    pub residual: T,
    /// Half-width of the 95% confidence interval for `exponent`.
    pub exponent_ci: T,
}

pub fn fit_power_law<T: Real>(xs: &[T], ys: &[T], with_log: bool) -> Result<PowerLawFit<T>> {
    let mut rows = Vec::with_capacity(xs.len());
    let mut logs = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if x <= T::one() || y <= T::zero() || !y.is_finite() {
            return Err(Error::Domain(format!(
                "power-law fit needs x > 1 and y > 0, got ({x}, {y})"
            )));
        }
        let lx = x.ln();
        let mut row = vec![T::one(), lx];
        if with_log {
            row.push(lx.ln());
        }
        rows.push(row);
        logs.push(y.ln());
    }
    let fit = least_squares(&rows, &logs)?;
    Ok(PowerLawFit {
        exponent: -fit.coeffs[1],
        log_exponent: with_log.then(|| fit.coeffs[2]),
        prefactor: fit.coeffs[0].exp(),
        residual: fit.residual,
        exponent_ci: T::lit(1.96) * fit.stderr[1],
    })
}

/// Log-spaced integer grid in `[lo, hi]` without duplicates.
pub fn log_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    let (l, h) = ((lo.max(1)) as f64, hi as f64);
    let mut out: Vec<usize> = (0..points)
        .map(|i| {
            let f = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            (l * (h / l).powf(f)).round() as usize
        })
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_power_law() {
        let xs: Vec<f64> = (1..50).map(|i| 10.0 * 1.2f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        let f = fit_power_law(&xs, &ys, false).unwrap();
        assert_relative_eq!(f.exponent, 1.0, epsilon = 1e-10);
        assert_relative_eq!(f.prefactor, 3.0, max_relative = 1e-9);
    }

    #[test]
    fn recovers_log_correction() {
        let xs: Vec<f64> = log_grid(10, 10_000, 60).into_iter().map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.ln().powi(2) / x).collect();
        let f = fit_power_law(&xs, &ys, true).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-8);
        assert!((f.log_exponent.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn works_in_single_precision() {
        let xs: Vec<f32> = (2..40).map(|i| i as f32).collect();
        let ys: Vec<f32> = xs.iter().map(|x| x.powf(-1.5)).collect();
        let f = fit_power_law(&xs, &ys, false).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-3);
    }
}

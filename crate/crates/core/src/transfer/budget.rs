use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::maps::InducedMap;
use crate::quadrature::GaussLegendre;

/// `μ_Y(r ≥ k)` for `1 ≤ k ≤ horizon`, continued beyond the horizon by
/// `A (ln k)^γ k^{-(β+1)}` matched at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TailData {
    /// `ge[k - 1] = μ_Y(r ≥ k)`.
    ge: Vec<f64>,
    beta: f64,
    gamma: f64,
    scale: f64,
}

impl TailData {
    pub fn new(ge: Vec<f64>, beta: f64, gamma: f64) -> Result<Self> {
        if ge.len() < 3 {
            return Err(Error::Parameter("tail data needs at least three values".into()));
        }
        if !(beta > 0.0) || gamma < 0.0 {
            return Err(Error::Parameter(format!("need β > 0 and γ ≥ 0, got β = {beta}, γ = {gamma}")));
        }
        if ge.windows(2).any(|w| w[1] > w[0]) || ge.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Parameter("μ_Y(r ≥ k) must be nonnegative and nonincreasing".into()));
        }
        let h = ge.len() as f64;
        let shape = h.ln().max(1.0).powf(gamma) * h.powf(-(beta + 1.0));
        let scale = ge[ge.len() - 1] / shape;
        Ok(Self { ge, beta, gamma, scale })
    }

    /// `μ_Y(r ≥ k) = min over j ≤ k of max(ln j, 1)^γ j^{-(β+1)}`.
    pub fn power_law(beta: f64, gamma: f64, horizon: usize) -> Result<Self> {
        let mut ge = Vec::with_capacity(horizon);
        let mut run = 1.0f64;
        for k in 1..=horizon.max(3) {
            let kf = k as f64;
            run = run.min(kf.ln().max(1.0).powf(gamma) * kf.powf(-(beta + 1.0)));
            ge.push(run);
        }
        Self::new(ge, beta, gamma)
    }

    /// Tail of an induced map with the map's declared exponent beyond the cells.
    pub fn from_induced(ind: &InducedMap<f64>, horizon: usize) -> Result<Self> {
        let declared = ind
            .declared_tail()
            .ok_or_else(|| Error::Unsupported("induced map declares no tail exponent".into()))?;
        let ge = (1..=horizon.max(3)).map(|k| ind.return_time_tail(k - 1).total).collect();
        Self::new(ge, declared.beta, declared.gamma)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.ge.len()
    }

    pub fn tail_ge(&self, k: f64) -> f64 {
        if k <= 1.0 {
            return self.ge[0];
        }
        let i = k.floor() as usize;
        if i <= self.ge.len() {
            return self.ge[i - 1];
        }
        self.scale * k.ln().max(1.0).powf(self.gamma) * k.powf(-(self.beta + 1.0))
    }

    /// `d_N = Σ_{k ≤ N} k μ_Y(r ≥ k)`, the part beyond the horizon by
    /// quadrature in `ln k`.
    pub fn d_n(&self, n: f64) -> f64 {
        let exact_to = (n.floor() as usize).min(self.ge.len());
        let mut acc: f64 = (1..=exact_to).map(|k| k as f64 * self.ge[k - 1]).sum();
        if n.floor() > self.ge.len() as f64 {
            let (a, b) = ((self.ge.len() as f64 + 0.5).ln(), (n.floor() + 0.5).ln());
            let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
            let gl = GaussLegendre::<f64>::new(8);
            for p in 0..panels {
                let lo = a + (b - a) * p as f64 / panels as f64;
                let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
                for (u, w) in gl.mapped(lo, hi) {
                    // k μ(r ≥ k) dk with k = e^u, in logs so that huge k neither
                    // overflows k² nor underflows the tail
                    let log_f = self.scale.ln() + self.gamma * u.max(1.0).ln() + (1.0 - self.beta) * u;
                    acc += w * log_f.exp();
                }
            }
        }
        acc
    }
}

/// Growth of `d_N` by the case analysis on `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DnClass {
    /// `β > 1`.
    Bounded,
    /// `β = 1`: `(ln N)^{γ+1}`.
    LogPower { power: f64 },
    /// `β < 1`: `(ln N)^γ N^{1-β}`.
    PowerLog { exponent: f64, log_power: f64 },
}

impl DnClass {
    pub fn classify(beta: f64, gamma: f64) -> Self {
        if (beta - 1.0).abs() < 1e-12 {
            DnClass::LogPower { power: gamma + 1.0 }
        } else if beta > 1.0 {
            DnClass::Bounded
        } else {
            DnClass::PowerLog { exponent: 1.0 - beta, log_power: gamma }
        }
    }

    pub fn shape(&self, n: f64) -> f64 {
        match *self {
            DnClass::Bounded => 1.0,
            DnClass::LogPower { power } => n.ln().powf(power),
            DnClass::PowerLog { exponent, log_power } => n.ln().powf(log_power) * n.powf(exponent),
        }
    }

    /// Polynomial growth exponent of `d_N`.
    pub fn exponent(&self) -> f64 {
        match *self {
            DnClass::PowerLog { exponent, .. } => exponent,
            _ => 0.0,
        }
    }
}

/// `d_N / shape(N)` over a log grid; the class is reproduced when this ratio
/// settles.
#[derive(Debug, Clone, PartialEq)]
pub struct DnCheck {
    pub class: DnClass,
    pub ratios: Vec<(f64, f64)>,
    /// Largest over smallest ratio on the upper half of the grid.
    pub spread: f64,
    pub nondecreasing: bool,
}

pub fn dn_growth_check(tail: &TailData, n_lo: f64, n_hi: f64, points: usize) -> DnCheck {
    let class = DnClass::classify(tail.beta(), tail.gamma());
    let grid: Vec<f64> = (0..points)
        .map(|i| (n_lo.ln() + (n_hi.ln() - n_lo.ln()) * i as f64 / (points - 1).max(1) as f64).exp().round())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&n| tail.d_n(n)).collect();
    let ratios: Vec<(f64, f64)> = grid.iter().zip(&values).map(|(&n, &d)| (n, d / class.shape(n))).collect();
    let upper = &ratios[ratios.len() / 2..];
    let hi = upper.iter().map(|r| r.1).fold(0.0, f64::max);
    let lo = upper.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let nondecreasing = values.windows(2).all(|w| w[1] >= w[0]);
    DnCheck { class, ratios, spread: hi / lo, nondecreasing }
}

/// Choice of truncation level as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Bounded roof: `N = [t/q]`.
    Bounded,
    /// Unbounded roof: `N = [t/(q ln t)]`.
    Unbounded,
}

/// Admissible parameter region of the rate argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    /// `p` must exceed this. For bounded roofs it is `β` when `β ≥ 1` and
    /// `(2 - β)/β` otherwise.
    pub p_threshold: f64,
    /// Smallest admissible integer `p`.
    pub p_min: u32,
    /// `d` must lie in `(0, d_max)`.
    pub d_max: f64,
    /// `q` must exceed this.
    pub q_min: f64,
    pub violations: Vec<String>,
}

pub fn budget_constraints(beta: f64, gamma: f64, p: f64, d: f64, q: f64, eps: f64, schedule: Schedule) -> Constraints {
    let growth = DnClass::classify(beta, gamma).exponent();
    let p_threshold = match schedule {
        Schedule::Bounded if beta >= 1.0 => beta,
        Schedule::Bounded => (2.0 - beta) / beta,
        // room for d > 0 in the unbounded d_max below
        Schedule::Unbounded => (beta + 3.0 + growth) / (1.0 - growth),
    };
    let p_min = (p_threshold.floor() + 1.0) as u32;
    let d_max = match schedule {
        // (d_N N^d)^{p+2} t^{-p} below t^{-β}
        Schedule::Bounded => ((p - beta) - growth * (p + 2.0)) / (p + 2.0),
        // N^3 (d_N N^d)^{p+1} t^{-p} below t^{-β}
        Schedule::Unbounded => ((p - beta - 3.0) - growth * (p + 1.0)) / (p + 1.0),
    };
    let q_min = match schedule {
        // d_N N^{1+d} N^{-εq} below N^{-β}
        Schedule::Bounded => (1.0 + d + growth + beta) / eps,
        // N^3 d_N N^d t^{-εq} below t^{-β}
        Schedule::Unbounded => (3.0 + d + growth + beta) / eps,
    };
    let mut violations = Vec::new();
    if !(eps > 0.0) {
        violations.push(format!("ε must be positive, got {eps}"));
    }
    if p <= p_threshold {
        violations.push(format!("p = {p} must exceed {p_threshold}"));
    }
    if !(d > 0.0 && d < d_max) {
        violations.push(format!("d = {d} must lie in (0, {d_max})"));
    }
    if q <= q_min {
        violations.push(format!("q = {q} must exceed {q_min}"));
    }
    Constraints { p_threshold, p_min, d_max, q_min, violations }
}

/// Bound terms at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetRow {
    pub t: f64,
    pub n: f64,
    pub d_n: f64,
    /// Natural logarithms of the four bound terms.
    pub log_terms: [f64; 4],
    /// Index of the largest term.
    pub dominant: usize,
    /// `(ln t)^γ t^{-β}`, or `(ln t)^{β+1} t^{-β}` for unbounded roofs.
    pub predicted_rate: f64,
}

impl BudgetRow {
    pub fn terms(&self) -> [f64; 4] {
        self.log_terms.map(f64::exp)
    }

    pub fn log_total(&self) -> f64 {
        let m = self.log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + self.log_terms.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBudget {
    pub beta: f64,
    pub gamma: f64,
    pub p: f64,
    pub d: f64,
    pub q: f64,
    pub eps: f64,
    pub schedule: Schedule,
    pub constraints: Constraints,
    pub rows: Vec<BudgetRow>,
    /// Fitted `(exponent, log exponent)` of `total ≈ A t^{-exponent} (ln t)^{log}`
    /// over the upper half of the grid.
    pub total_fit: (f64, f64),
    /// The same fit per term.
    pub term_fits: [(f64, f64); 4],
}

impl RateBudget {
    /// `d̃_N = d_N N^d` at each row.
    pub fn d_tilde(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.d_n * r.n.powf(self.d)).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "N", "term1", "term2", "term3", "term4", "dominant", "predicted_rate"])?;
        for r in &self.rows {
            let t = r.terms();
            w.write_record([
                r.t.to_string(),
                r.n.to_string(),
                t[0].to_string(),
                t[1].to_string(),
                t[2].to_string(),
                t[3].to_string(),
                (r.dominant + 1).to_string(),
                r.predicted_rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit_rate(ts: &[f64], logs: &[f64]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = ts.iter().map(|t| vec![1.0, t.ln(), t.ln().ln()]).collect();
    let fit = least_squares(&rows, logs)?;
    Ok((-fit.coeffs[1], fit.coeffs[2]))
}

/// Bound terms of the rate argument along the chosen `N(t)` schedule on a
/// log-spaced `t` grid; parameters outside the admissible region are refused.
#[allow(clippy::too_many_arguments)]
pub fn rate_budget(
    tail: &TailData,
    p: f64,
    d: f64,
    q: f64,
    eps: f64,
    schedule: Schedule,
    t_range: (f64, f64),
    points: usize,
) -> Result<RateBudget> {
    let (beta, gamma) = (tail.beta(), tail.gamma());
    let constraints = budget_constraints(beta, gamma, p, d, q, eps, schedule);
    if !constraints.violations.is_empty() {
        return Err(Error::Parameter(format!("constraint violation: {}", constraints.violations.join("; "))));
    }
    if !(t_range.0 > std::f64::consts::E && t_range.1 > t_range.0) || points < 4 {
        return Err(Error::Parameter("t grid needs e < t_lo < t_hi and at least four points".into()));
    }
    let (a, b) = (t_range.0.ln(), t_range.1.ln());
    let rows: Vec<BudgetRow> = (0..points)
        .map(|i| {
            let lt = a + (b - a) * i as f64 / (points - 1) as f64;
            let t = lt.exp();
            let n = match schedule {
                Schedule::Bounded => (t / q).floor(),
                Schedule::Unbounded => (t / (q * lt)).floor(),
            }
            .max(2.0);
            let ln_n = n.ln();
            let d_n = tail.d_n(n);
            let ld = d_n.ln();
            let log_terms = match schedule {
                Schedule::Bounded => [
                    gamma * ln_n.ln() - beta * ln_n,
                    lt + gamma * ln_n.ln() - (beta + 1.0) * ln_n,
                    ld + (1.0 + d) * ln_n - eps * ln_n * t / n,
                    (p + 2.0) * (ld + d * ln_n) - p * lt,
                ],
                Schedule::Unbounded => [
                    -beta * ln_n,
                    lt - (beta + 1.0) * ln_n,
                    3.0 * ln_n + ld + d * ln_n - eps * t / n,
                    3.0 * ln_n + (p + 1.0) * (ld + d * ln_n) - p * lt,
                ],
            };
            let dominant = (0..4).max_by(|&x, &y| log_terms[x].total_cmp(&log_terms[y])).unwrap_or(0);
            let log_pow = match schedule {
                Schedule::Bounded => gamma,
                Schedule::Unbounded => beta + 1.0,
            };
            let predicted_rate = (log_pow * lt.ln() - beta * lt).exp();
            BudgetRow { t, n, d_n, log_terms, dominant, predicted_rate }
        })
        .collect();
    let upper = &rows[rows.len() / 2..];
    let ts: Vec<f64> = upper.iter().map(|r| r.t).collect();
    let total_fit = fit_rate(&ts, &upper.iter().map(|r| r.log_total()).collect::<Vec<_>>())?;
    let mut term_fits = [(0.0, 0.0); 4];
    for (k, slot) in term_fits.iter_mut().enumerate() {
        *slot = fit_rate(&ts, &upper.iter().map(|r| r.log_terms[k]).collect::<Vec<_>>())?;
    }
    Ok(RateBudget { beta, gamma, p, d, q, eps, schedule, constraints, rows, total_fit, term_fits })
}

/// Tower with `μ_Y(r = k) = (1 - e^{-1}) e^{-(k-1)}` whose roof is constant up
/// each column, `h = (e^k/k)^{1/(β+2)}` on the column with `r = k`, so that
/// `H = k h` on its base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnConstantExample {
    pub beta: f64,
}

/// `μ_Y(Y(n))` against the bound `(ln n)^{β+2} n^{-(β+1)}` and the sharper
/// profile `(ln n)^{β+1} n^{-(β+1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct YnReport {
    /// `(n, μ_Y(Y(n)), μ_Δ(Δ(n)))`.
    pub rows: Vec<(f64, f64, f64)>,
    /// `sup μ_Y(Y(n)) / ((ln n)^{β+2} n^{-(β+1)})`.
    pub bound_constant: f64,
    /// `sup μ_Y(Y(n)) / ((ln n)^{β+1} n^{-(β+1)})`.
    pub gap_constant: f64,
    /// Ratio to the bound at the last grid point over the first.
    pub bound_ratio_decay: f64,
    /// `sup μ_Δ(Δ(n)) n^{β+1}`.
    pub delta_constant: f64,
    /// Fitted `(exponent, log exponent)` of `μ_Y(Y(n))`.
    pub fit: (f64, f64),
}

impl ColumnConstantExample {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Parameter(format!("β must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn mass(&self, k: usize) -> f64 {
        (1.0 - (-1.0f64).exp()) * (-(k as f64 - 1.0)).exp()
    }

    /// `∫ r dμ_Y = 1/(1 - e^{-1})`.
    pub fn mean_return(&self) -> f64 {
        1.0 / (1.0 - (-1.0f64).exp())
    }

    pub fn roof(&self, k: usize) -> f64 {
        let kf = k as f64;
        ((kf - kf.ln()) / (self.beta + 2.0)).exp()
    }

    pub fn induced_roof(&self, k: usize) -> f64 {
        k as f64 * self.roof(k)
    }

    /// `μ_Y(r ≥ k) = e^{-(k-1)}`.
    fn tail(&self, k: usize) -> f64 {
        (-(k as f64 - 1.0)).exp()
    }

    /// `μ_Y(Y(n))`; both `h` and `H` increase with `k`.
    pub fn y_tail(&self, n: f64) -> f64 {
        let k = (1..).find(|&k| self.induced_roof(k) >= n).unwrap_or(1);
        self.tail(k)
    }

    /// `μ_Δ(Δ(n))`: whole columns with `h ≥ n`.
    pub fn delta_tail(&self, n: f64) -> f64 {
        let k0 = (1..).find(|&k| self.roof(k) >= n).unwrap_or(1);
        // Σ_{k ≥ k0} k μ_Y(r = k) = e^{-(k0-1)} (k0 + e^{-1}/(1 - e^{-1}))
        let e1 = (-1.0f64).exp();
        self.tail(k0) * (k0 as f64 + e1 / (1.0 - e1)) / self.mean_return()
    }

    pub fn report(&self, n_lo: f64, n_hi: f64, points: usize) -> Result<YnReport> {
        if !(n_lo > std::f64::consts::E && n_hi > n_lo) || points < 4 {
            return Err(Error::Parameter("n grid needs e < n_lo < n_hi and four points".into()));
        }
        let b = self.beta;
        let rows: Vec<(f64, f64, f64)> = (0..points)
            .map(|i| {
                let n = (n_lo.ln() + (n_hi.ln() - n_lo.ln()) * i as f64 / (points - 1) as f64).exp();
                (n, self.y_tail(n), self.delta_tail(n))
            })
            .collect();
        let bound = |n: f64| n.ln().powf(b + 2.0) * n.powf(-(b + 1.0));
        let sharp = |n: f64| n.ln().powf(b + 1.0) * n.powf(-(b + 1.0));
        let bound_constant = rows.iter().map(|r| r.1 / bound(r.0)).fold(0.0, f64::max);
        let gap_constant = rows.iter().map(|r| r.1 / sharp(r.0)).fold(0.0, f64::max);
        let first = rows[0].1 / bound(rows[0].0);
        let last = rows[rows.len() - 1].1 / bound(rows[rows.len() - 1].0);
        let delta_constant = rows.iter().map(|r| r.2 * r.0.powf(b + 1.0)).fold(0.0, f64::max);
        let ns: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let logs: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
        let fit = fit_rate(&ns, &logs)?;
        Ok(YnReport { rows, bound_constant, gap_constant, bound_ratio_decay: last / first, delta_constant, fit })
    }
}

//! Suspension semiflows over towers, stationary sampling and Monte-Carlo
//! correlation estimates, including coupled truncation experiments.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, PowerLawFit};
use crate::roof::{blend_step, blend_step_derivative, Observable, Roof};
use crate::tower::Tower;

/// Samples per deterministic work chunk; also the batch size for batch means.
pub const CHUNK: usize = 4096;

/// A point of the suspension: base point `y`, level `ℓ` in a column of height `r`,
/// projection `x = T^ℓ y` and height `u` under the roof.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPoint {
    pub y: f64,
    pub level: usize,
    pub r: usize,
    pub x: f64,
    pub u: f64,
}

/// Suspension flow over a tower, optionally with truncated return time and roof.
#[derive(Debug, Clone)]
pub struct FlowSystem {
    tower: Tower<f64>,
    roof: Roof,
    r_cut: Option<usize>,
    h_cut: Option<f64>,
    /// Cumulative `r_j μ_Y(Y_j)` over columns, then the tail.
    cumulative: Vec<f64>,
    /// Per-column upper bound for the base density.
    density_max: Vec<f64>,
}

impl FlowSystem {
    pub fn new(tower: Tower<f64>, roof: Roof) -> Result<Self> {
        let ind = tower.induced();
        if !ind.has_projection() {
            return Err(Error::Unsupported("flows need an underlying interval map".into()));
        }
        if !roof.is_bounded() && ind.max_return() != 1 {
            return Err(Error::Unsupported(
                "unbounded roofs are supported over towers with r ≡ 1".into(),
            ));
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(ind.cells().len() + 1);
        let mut density_max = Vec::with_capacity(ind.cells().len());
        for c in ind.cells() {
            acc += c.r as f64 * c.weight;
            cumulative.push(acc);
            let m = (0..=16)
                .map(|i| ind.density(c.left + (c.right - c.left) * i as f64 / 16.0))
                .fold(0.0, f64::max);
            density_max.push(m * 1.05);
        }
        if let Some(t) = ind.tail() {
            acc += t.r_mass;
        }
        cumulative.push(acc);
        Ok(Self { tower, roof, r_cut: None, h_cut: None, cumulative, density_max })
    }

    /// Same flow with `r' = min{r, n}`.
    pub fn with_return_truncation(&self, n: usize) -> Self {
        Self { r_cut: Some(n.max(1)), ..self.clone() }
    }

    /// Same flow with `h' = min{h, n}`.
    pub fn with_roof_truncation(&self, n: f64) -> Self {
        Self { h_cut: Some(n), ..self.clone() }
    }

    pub fn tower(&self) -> &Tower<f64> {
        &self.tower
    }

    pub fn roof(&self) -> &Roof {
        &self.roof
    }

    pub fn roof_at(&self, x: f64) -> f64 {
        let h = self.roof.eval(x);
        match self.h_cut {
            Some(c) => h.min(c),
            None => h,
        }
    }

    pub fn effective_return(&self, r: usize) -> usize {
        match self.r_cut {
            Some(n) => r.min(n),
            None => r,
        }
    }

    /// Whether `p` lies in this (possibly truncated) suspension.
    pub fn contains(&self, p: &FlowPoint) -> bool {
        p.level < self.effective_return(p.r) && p.u < self.roof_at(p.x)
    }

    /// Return time of a base point, including unrepresented columns.
    fn return_time(&self, y: f64) -> Result<usize> {
        let ind = self.tower.induced();
        match ind.locate(y)? {
            Some(c) => Ok(ind.cells()[c].r),
            None => Ok(ind.induced_step(y)?.0),
        }
    }

    /// Suspension point over the base point `y` at level 0.
    pub fn base_point(&self, y: f64, u: f64) -> Result<FlowPoint> {
        let r = self.return_time(y)?;
        let p = FlowPoint { y, level: 0, r, x: y, u };
        if !(u >= 0.0 && u < self.roof_at(y)) {
            return Err(Error::Domain(format!("u = {u} outside [0, h(x))")));
        }
        Ok(p)
    }

    fn next_segment(&self, p: &FlowPoint) -> Result<FlowPoint> {
        let ind = self.tower.induced();
        let map = ind.map().expect("checked at construction");
        let rp = self.effective_return(p.r);
        if p.level + 1 == rp && rp < p.r {
            // truncated top: jump to F y
            let (_, z) = ind.induced_step(p.y)?;
            return Ok(FlowPoint { y: z, level: 0, r: self.return_time(z)?, x: z, u: 0.0 });
        }
        let z = map.evaluate(p.x)?;
        let (a, _) = ind.base();
        if z >= a {
            Ok(FlowPoint { y: z, level: 0, r: self.return_time(z)?, x: z, u: 0.0 })
        } else {
            // stay consistent with the forward orbit if rounding disagrees with r
            let r = p.r.max(p.level + 2);
            Ok(FlowPoint { y: p.y, level: p.level + 1, r, x: z, u: 0.0 })
        }
    }

    /// `φ_t(p)` and the number of roof crossings.
    pub fn flow(&self, p: &FlowPoint, t: f64) -> Result<(FlowPoint, usize)> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("flow time must be nonnegative, got {t}")));
        }
        if !(p.u >= 0.0 && p.u < self.roof_at(p.x)) {
            return Err(Error::Domain(format!("u = {} outside [0, h(x))", p.u)));
        }
        let mut q = *p;
        let mut rem = t;
        let mut crossings = 0usize;
        loop {
            let h = self.roof_at(q.x);
            if q.u + rem < h {
                q.u += rem;
                return Ok((q, crossings));
            }
            rem -= h - q.u;
            q = self.next_segment(&q)?;
            crossings += 1;
        }
    }

    /// One draw from the stationary measure of the untruncated suspension.
    pub fn sample_parent<R: Rng>(&self, rng: &mut R) -> Result<FlowPoint> {
        let ind = self.tower.induced();
        if !self.roof.is_bounded() {
            let x = self.roof.sample_weighted_lebesgue(rng.random(), rng.random())?;
            let h = self.roof.eval(x);
            return Ok(FlowPoint { y: x, level: 0, r: 1, x, u: rng.random::<f64>() * h });
        }
        let map = ind.map().expect("checked at construction");
        let hmax = self.roof.sup();
        let total = *self.cumulative.last().unwrap();
        for _ in 0..1_000_000 {
            let target = rng.random::<f64>() * total;
            let col = self.cumulative.partition_point(|&c| c <= target);
            let (y, r) = if col < ind.cells().len() {
                let c = ind.cells()[col];
                let y = loop {
                    let y = c.left + rng.random::<f64>() * (c.right - c.left);
                    if rng.random::<f64>() * self.density_max[col] <= ind.density(y) {
                        break y;
                    }
                };
                (y, c.r)
            } else {
                let t = ind.tail().expect("tail weight implies a tail");
                let y = t.left + rng.random::<f64>() * (t.right - t.left);
                (y, ind.induced_step(y)?.0)
            };
            let level = rng.random_range(0..r);
            let mut x = y;
            for _ in 0..level {
                x = map.evaluate(x)?;
            }
            let h = self.roof.eval(x);
            if rng.random::<f64>() * hmax <= h {
                let u = rng.random::<f64>() * h;
                return Ok(FlowPoint { y, level, r, x, u });
            }
        }
        Err(Error::numeric("stationary rejection sampler stalled", 0.0))
    }

    /// One draw from this system's stationary measure (restriction of the parent).
    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> Result<FlowPoint> {
        loop {
            let p = self.sample_parent(rng)?;
            if self.contains(&p) {
                return Ok(p);
            }
        }
    }

    /// `n` stationary samples, deterministic in `seed` for any thread count.
    pub fn sample_stationary(&self, seed: u64, n: usize) -> Result<Vec<FlowPoint>> {
        (0..n)
            .into_par_iter()
            .map(|i| self.sample_one(&mut sample_rng(seed, i as u64)))
            .collect()
    }
}

/// Independent random stream for sample `index`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Observable evaluated at suspension points.
pub trait FlowObservable: Sync {
    fn value(&self, sys: &FlowSystem, p: &FlowPoint) -> f64;
    fn sup(&self) -> f64;
}

impl FlowObservable for Observable {
    fn value(&self, sys: &FlowSystem, p: &FlowPoint) -> f64 {
        self.eval(p.x, p.u, sys.roof_at(p.x))
    }

    fn sup(&self) -> f64 {
        Observable::sup(self)
    }
}

/// Estimated correlation function on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub t: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl CorrelationSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "rho", "stderr", "n_samples", "seed"])?;
        for i in 0..self.t.len() {
            w.write_record([
                format!("{}", self.t[i]),
                format!("{:e}", self.rho[i]),
                format!("{:e}", self.stderr[i]),
                self.n_samples.to_string(),
                self.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    count: f64,
    v: f64,
    w: Vec<f64>,
    vw: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self { count: 0.0, v: 0.0, w: vec![0.0; k], vw: vec![0.0; k] }
    }

    fn add(&mut self, other: &Moments) {
        self.count += other.count;
        self.v += other.v;
        for i in 0..self.w.len() {
            self.w[i] += other.w[i];
            self.vw[i] += other.vw[i];
        }
    }

    fn rho(&self, i: usize) -> f64 {
        if self.count == 0.0 {
            return 0.0;
        }
        self.vw[i] / self.count - (self.v / self.count) * (self.w[i] / self.count)
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("time grid must be nonempty, nonnegative and sorted".into()));
    }
    Ok(())
}

/// Accumulates `v(p)` and `w(φ_t p)` along one trajectory into `m`.
fn accumulate(
    sys: &FlowSystem,
    p: &FlowPoint,
    v: &dyn FlowObservable,
    w: &dyn FlowObservable,
    t_grid: &[f64],
    m: &mut Moments,
) -> Result<()> {
    let v0 = v.value(sys, p);
    m.count += 1.0;
    m.v += v0;
    let mut q = *p;
    let mut now = 0.0;
    for (i, &t) in t_grid.iter().enumerate() {
        q = sys.flow(&q, t - now)?.0;
        now = t;
        let wt = w.value(sys, &q);
        m.w[i] += wt;
        m.vw[i] += v0 * wt;
    }
    Ok(())
}

fn batch_stderr(batches: &[f64]) -> f64 {
    let b = batches.len() as f64;
    if batches.len() < 2 {
        return f64::INFINITY;
    }
    let mean = batches.iter().sum::<f64>() / b;
    let var = batches.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n))).collect()
}

/// Ensemble estimate of `ρ(t) = ∫ v·w∘φ_t - ∫v ∫w` over stationary samples.
pub fn correlation_mc(
    sys: &FlowSystem,
    v: &dyn FlowObservable,
    w: &dyn FlowObservable,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    if n_samples < 100 {
        return Err(Error::Parameter("at least 100 samples are needed".into()));
    }
    check_grid(t_grid)?;
    let k = t_grid.len();
    let chunks: Vec<Moments> = chunk_ranges(n_samples)
        .into_par_iter()
        .map(|(lo, hi)| -> Result<Moments> {
            let mut m = Moments::new(k);
            for i in lo..hi {
                let p = sys.sample_one(&mut sample_rng(seed, i as u64))?;
                accumulate(sys, &p, v, w, t_grid, &mut m)?;
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut total = Moments::new(k);
    for c in &chunks {
        total.add(c);
    }
    let rho = (0..k).map(|i| total.rho(i)).collect();
    let stderr = (0..k)
        .map(|i| batch_stderr(&chunks.iter().map(|c| c.rho(i)).collect::<Vec<_>>()))
        .collect();
    Ok(CorrelationSeries { t: t_grid.to_vec(), rho, stderr, n_samples, seed })
}

/// `ρ(t) - ρ'(t)` from coupled samples of a system and its truncation.
#[derive(Debug, Clone)]
pub struct CoupledSeries {
    pub t: Vec<f64>,
    pub rho_full: Vec<f64>,
    pub rho_trunc: Vec<f64>,
    pub diff: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fraction of parent samples lying in the truncated suspension.
    pub inside_fraction: f64,
}

/// Runs both flows from the same stationary samples of `full`; samples that
/// lie in `trunc` also feed the truncated estimate, which is exact because the
/// truncated invariant measure is the normalized restriction of the full one.
pub fn coupled_correlation(
    full: &FlowSystem,
    trunc: &FlowSystem,
    v: &dyn FlowObservable,
    w: &dyn FlowObservable,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CoupledSeries> {
    if n_samples < 100 {
        return Err(Error::Parameter("at least 100 samples are needed".into()));
    }
    check_grid(t_grid)?;
    let k = t_grid.len();
    let chunks: Vec<(Moments, Moments)> = chunk_ranges(n_samples)
        .into_par_iter()
        .map(|(lo, hi)| -> Result<(Moments, Moments)> {
            let mut a = Moments::new(k);
            let mut b = Moments::new(k);
            for i in lo..hi {
                let p = full.sample_one(&mut sample_rng(seed, i as u64))?;
                accumulate(full, &p, v, w, t_grid, &mut a)?;
                if trunc.contains(&p) {
                    accumulate(trunc, &p, v, w, t_grid, &mut b)?;
                }
            }
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let mut ta = Moments::new(k);
    let mut tb = Moments::new(k);
    for (a, b) in &chunks {
        ta.add(a);
        tb.add(b);
    }
    let rho_full: Vec<f64> = (0..k).map(|i| ta.rho(i)).collect();
    let rho_trunc: Vec<f64> = (0..k).map(|i| tb.rho(i)).collect();
    let diff = (0..k).map(|i| rho_full[i] - rho_trunc[i]).collect();
    let stderr = (0..k)
        .map(|i| batch_stderr(&chunks.iter().map(|(a, b)| a.rho(i) - b.rho(i)).collect::<Vec<_>>()))
        .collect();
    Ok(CoupledSeries {
        t: t_grid.to_vec(),
        rho_full,
        rho_trunc,
        diff,
        stderr,
        inside_fraction: tb.count / ta.count,
    })
}

/// One `(N, t)` cell of a truncation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub n: usize,
    pub t: f64,
    pub diff: f64,
    pub stderr: f64,
    pub bound: f64,
    pub closed_form: f64,
}

/// Measured truncation errors against the bound, with one fitted constant.
#[derive(Debug, Clone)]
pub struct TruncationTable {
    pub rows: Vec<TruncationRow>,
    /// `max |diff| / (|v|_∞ |w|_∞ bound)` over the whole grid.
    pub c_fit: f64,
    /// The same maximum restricted to each `N`.
    pub c_per_n: Vec<(usize, f64)>,
    /// Extra error of the second truncation `r' = min{r, [q ln N]}` (roof experiments).
    pub second_truncation: Vec<(usize, f64, f64)>,
}

impl TruncationTable {
    /// Ratio of the largest to the smallest per-`N` constant.
    pub fn stability(&self) -> f64 {
        let hi = self.c_per_n.iter().map(|c| c.1).fold(0.0, f64::max);
        let lo = self.c_per_n.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }

    pub fn holds(&self) -> bool {
        let scale = self.c_fit;
        self.rows.iter().all(|r| r.diff.abs() <= scale * r.bound * (1.0 + 1e-12))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "t", "diff", "stderr", "bound", "closed_form", "c_fit"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.t.to_string(),
                format!("{:e}", r.diff),
                format!("{:e}", r.stderr),
                format!("{:e}", r.bound),
                format!("{:e}", r.closed_form),
                format!("{:e}", self.c_fit),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit_constants(rows: &[TruncationRow], scale: f64) -> (f64, Vec<(usize, f64)>) {
    let mut per: Vec<(usize, f64)> = Vec::new();
    for r in rows {
        let c = r.diff.abs() / (scale * r.bound);
        match per.iter_mut().find(|p| p.0 == r.n) {
            Some(p) => p.1 = p.1.max(c),
            None => per.push((r.n, c)),
        }
    }
    let c = per.iter().map(|p| p.1).fold(0.0, f64::max);
    (c, per)
}

/// Return-time truncation `r' = min{r, N}` for a bounded roof: measured
/// `|ρ - ρ'|` against `Σ_{n>N} μ_Y(r≥n) + (N+t) μ_Y(r≥N)`.
pub fn truncation_error_experiment(
    sys: &FlowSystem,
    v: &dyn FlowObservable,
    w: &dyn FlowObservable,
    n_list: &[usize],
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<TruncationTable> {
    if !sys.roof().is_bounded() {
        return Err(Error::Unsupported(
            "unbounded roof: use the roof truncation experiment".into(),
        ));
    }
    let ind = sys.tower().induced();
    let declared = ind.declared_tail();
    let mut rows = Vec::new();
    for &n in n_list {
        let tt = sys.tower().truncate(n)?;
        let tail_n = ind.return_time_tail(n.saturating_sub(1)).total;
        let sum_beyond = tt.tail_sum_beyond();
        let res = coupled_correlation(sys, &sys.with_return_truncation(n), v, w, t_grid, n_samples, seed)?;
        for (i, &t) in t_grid.iter().enumerate() {
            let nf = n as f64;
            let closed_form = declared.map_or(0.0, |d| {
                let lg = nf.ln().powf(d.gamma);
                lg * nf.powf(-d.beta) + t * lg * nf.powf(-(d.beta + 1.0))
            });
            rows.push(TruncationRow {
                n,
                t,
                diff: res.diff[i],
                stderr: res.stderr[i],
                bound: sum_beyond + (nf + t) * tail_n,
                closed_form,
            });
        }
    }
    let (c_fit, c_per_n) = fit_constants(&rows, v.sup() * w.sup());
    Ok(TruncationTable { rows, c_fit, c_per_n, second_truncation: Vec::new() })
}

/// Roof truncation `h' = min{h, N}` for an unbounded roof, against
/// `N^{-β} + t N^{-(β+1)}`; also applies `r' = min{r, [q ln N]}` and records
/// the extra error of that second truncation.
pub fn roof_truncation_experiment(
    sys: &FlowSystem,
    v: &dyn FlowObservable,
    w: &dyn FlowObservable,
    n_list: &[usize],
    t_grid: &[f64],
    q: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TruncationTable> {
    let Some(beta) = sys.roof().declared_beta() else {
        return Err(Error::Unsupported(
            "bounded roof: use the return-time truncation experiment".into(),
        ));
    };
    let mut rows = Vec::new();
    let mut second = Vec::new();
    for &n in n_list {
        let nf = n as f64;
        let first = sys.with_roof_truncation(nf);
        let rcut = ((q * nf.ln()).floor() as usize).max(1);
        let both = first.with_return_truncation(rcut);
        let res = coupled_correlation(sys, &both, v, w, t_grid, n_samples, seed)?;
        let extra = coupled_correlation(&first, &both, v, w, t_grid, n_samples, seed ^ 0x9e37_79b9)?;
        for (i, &t) in t_grid.iter().enumerate() {
            let bound = nf.powf(-beta) + t * nf.powf(-(beta + 1.0));
            rows.push(TruncationRow { n, t, diff: res.diff[i], stderr: res.stderr[i], bound, closed_form: bound });
            second.push((n, t, extra.diff[i]));
        }
    }
    let (c_fit, c_per_n) = fit_constants(&rows, v.sup() * w.sup());
    Ok(TruncationTable { rows, c_fit, c_per_n, second_truncation: second })
}

/// `μ(E_k)` for the roof-truncation right set `{h > N}` on an `r ≡ 1` tower.
#[derive(Debug, Clone, Copy)]
pub struct EkkMeasure {
    pub measured: f64,
    pub stderr: f64,
    pub bound: f64,
}

/// Measure of the points whose flow meets `{h > N}` within time `k`, by
/// stratified sampling in `x` with exact integration in `u`, against
/// `μ(Δ^h_right) + k μ_Δ(h > N)/h̄`.
pub fn ekk_measure(sys: &FlowSystem, n: f64, k: f64, strata: usize) -> Result<EkkMeasure> {
    let ind = sys.tower().induced();
    if ind.max_return() != 1 || ind.base() != (0.0, 1.0) {
        return Err(Error::Unsupported("E_k for roof truncation needs a full-branch base".into()));
    }
    let map = ind.map().expect("flows have a map");
    let roof = sys.roof();
    let hbar = roof.lebesgue_mean();
    let mut rng = sample_rng(0x5eed, 0);
    let mut vals = Vec::with_capacity(strata);
    for i in 0..strata {
        let x = (i as f64 + rng.random::<f64>()) / strata as f64;
        let h = roof.eval(x);
        if h > n {
            vals.push(h);
            continue;
        }
        let mut z = x;
        let mut wsum = 0.0;
        let mut hit = false;
        while wsum < k {
            z = map.evaluate(z)?;
            let hz = roof.eval(z);
            if hz > n {
                hit = true;
                break;
            }
            wsum += hz;
        }
        vals.push(if hit { (k - wsum).clamp(0.0, h) } else { 0.0 });
    }
    let mean = vals.iter().sum::<f64>() / strata as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (strata as f64 - 1.0);
    let right = roof.superlevel_lebesgue(n);
    let right_mass = match roof.declared_beta() {
        Some(beta) => {
            let a = 1.0 / (beta + 1.0);
            right + right.powf(1.0 - a) / (1.0 - a)
        }
        None => right * roof.sup(),
    };
    Ok(EkkMeasure {
        measured: mean / hbar,
        stderr: (var / strata as f64).sqrt() / hbar,
        bound: (right_mass + k * right) / hbar,
    })
}

/// `v` modified on the top strip of the truncated columns so that it stays
/// smooth in the flow direction across the new identification.
#[derive(Debug, Clone)]
pub struct BufferedObservable {
    pub inner: Observable,
    pub n: usize,
    pub m: usize,
    /// Whether the blend window had to extend below the top strip.
    pub widened: bool,
    passthrough: bool,
}

impl BufferedObservable {
    /// Builds the buffered observable for truncation level `n` and smoothness `m`.
    pub fn new(v: &Observable, n: usize, m: usize) -> Self {
        Self { inner: v.clone(), n, m, widened: false, passthrough: !v.depends_on_u() }
    }

    /// True when `v` does not depend on `u`, in which case `ṽ = v`.
    pub fn is_passthrough(&self) -> bool {
        self.passthrough
    }

    /// Points `π(y, ℓ)` of the strip level and the original column top.
    fn strip_points(&self, sys: &FlowSystem, p: &FlowPoint) -> Option<(f64, f64)> {
        if self.passthrough || p.r <= self.n || p.level + 1 != self.n {
            return None;
        }
        let map = sys.tower().induced().map()?;
        let mut top = p.x;
        for _ in p.level..p.r - 1 {
            top = map.evaluate(top).ok()?;
        }
        Some((p.x, top))
    }

    /// `ṽ` and its `k`-th flow derivative at `p`.
    pub fn derivative(&self, sys: &FlowSystem, p: &FlowPoint, k: usize) -> f64 {
        let h_strip = sys.roof().eval(p.x);
        let Some((xs, xt)) = self.strip_points(sys, p) else {
            return self.inner.derivative(k, p.x, p.u, h_strip);
        };
        let h_top = sys.roof().eval(xt);
        let width = 0.25 * h_strip.min(h_top);
        let start = h_strip - width;
        if p.u < start {
            return self.inner.derivative(k, xs, p.u, h_strip);
        }
        let s = (p.u - start) / width;
        let shifted = p.u + h_top - h_strip;
        // Leibniz rule for (1-χ) a + χ b
        let mut total = 0.0;
        let mut binom = 1.0;
        for i in 0..=k {
            let chi_i = if i == 0 {
                blend_step(self.m, s)
            } else {
                blend_step_derivative(self.m, i, s) / width.powi(i as i32)
            };
            let a = self.inner.derivative(k - i, xs, p.u, h_strip);
            let b = self.inner.derivative(k - i, xt, shifted, h_top);
            total += binom * if i == 0 { (1.0 - chi_i) * a + chi_i * b } else { chi_i * (b - a) };
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
        total
    }

    /// Ratio of sampled `‖ṽ‖` and `‖v‖` surrogates (sup of the first `m` flow derivatives).
    pub fn norm_ratio(&self, sys: &FlowSystem, samples: &[FlowPoint]) -> f64 {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for k in 0..=self.m {
            let mut a = 0.0f64;
            let mut b = 0.0f64;
            for p in samples {
                a = a.max(self.derivative(sys, p, k).abs());
                b = b.max(self.inner.derivative(k, p.x, p.u, sys.roof().eval(p.x)).abs());
            }
            num += a;
            den += b;
        }
        if den > 0.0 {
            num / den
        } else {
            1.0
        }
    }

    /// `μ_Y(r ≥ N)` times the fraction of the strip that the blend modifies.
    pub fn modified_measure(&self, sys: &FlowSystem) -> f64 {
        if self.passthrough {
            return 0.0;
        }
        0.25 * sys.tower().induced().return_time_tail(self.n.saturating_sub(1)).total
    }
}

impl FlowObservable for BufferedObservable {
    fn value(&self, sys: &FlowSystem, p: &FlowPoint) -> f64 {
        self.derivative(sys, p, 0)
    }

    fn sup(&self) -> f64 {
        self.inner.sup()
    }
}

/// Fit of `|ρ(t)| ≈ A t^{-β} (ln t)^γ` on a window.
pub fn fit_decay(series: &CorrelationSeries, window: (f64, f64), with_log: bool) -> Result<PowerLawFit<f64>> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for i in 0..series.t.len() {
        let t = series.t[i];
        if t < window.0 || t > window.1 {
            continue;
        }
        if series.rho[i].abs() <= 3.0 * series.stderr[i] {
            return Err(Error::Domain(format!(
                "estimate at t = {t} is within 3 standard errors of zero; window dominated by noise"
            )));
        }
        ts.push(t);
        ys.push(series.rho[i].abs());
    }
    if ts.len() < 3 {
        return Err(Error::Parameter("fit window contains fewer than 3 points".into()));
    }
    fit_power_law(&ts, &ys, with_log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{InducedMap, MapModel};
    use std::sync::Arc;

    fn doubling(roof: Roof) -> FlowSystem {
        let ind = InducedMap::induce(&MapModel::doubling(), (0.0, 1.0), 2).unwrap();
        FlowSystem::new(Tower::with_default_theta(Arc::new(ind)).unwrap(), roof).unwrap()
    }

    #[test]
    fn constant_roof_flow_arithmetic() {
        let sys = doubling(Roof::constant(1.0).unwrap());
        let p = sys.base_point(0.1, 0.0).unwrap();
        let (q, n) = sys.flow(&p, 2.5).unwrap();
        assert!((q.x - 0.4).abs() < 1e-15);
        assert!((q.u - 0.5).abs() < 1e-15);
        assert_eq!(n, 2);
        let (_, n) = sys.flow(&p, 10.0).unwrap();
        assert_eq!(n, 10);
        assert_eq!(sys.flow(&p, 0.0).unwrap().0, p);
        assert!(sys.base_point(0.1, 1.0).is_err());
    }

    #[test]
    fn refuses_small_samples() {
        let sys = doubling(Roof::constant(1.0).unwrap());
        let v = Observable::Constant(1.0);
        assert!(correlation_mc(&sys, &v, &v, &[0.0], 50, 1).is_err());
    }
}

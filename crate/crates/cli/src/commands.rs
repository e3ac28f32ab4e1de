//! One function per subcommand. Each writes its CSVs and a plot script into the
//! output directory and returns the checks it made.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flowdecay::acceptance::{run_suite, AcceptanceOptions};
use flowdecay::maps::TailFit;
use flowdecay::periodic::{
    approx_eigenfunction_search, diophantine_sweep, enumerate_periodic, write_triples_csv, EigenOptions,
    FiniteSubsystem,
};
use flowdecay::suspension::{
    correlation_mc, ekk_measure, fit_decay, roof_truncation_experiment, truncation_error_experiment, FlowSystem,
};
use flowdecay::tower::Tower;
use flowdecay::transfer::{
    budget_constraints, dn_growth_check, laplace_mc, laplace_series, map_correlation_operator, rate_budget,
    renewal_build, resolvent_scan, tower_operator_decomposition, ColumnConstantExample, ProbeOptions, Schedule,
    TailData, TowerOperator,
};
use flowdecay::Error;
use num_complex::Complex64;

use crate::config::{ConfigError, ExperimentConfig};
use crate::plot::{script, Panel};

/// Why a subcommand stopped.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or parameters; exit code 3.
    Config(String),
    /// The computation could not be carried out; exit code 2.
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Config(_) | Error::Unsupported(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Shared state of one invocation.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub checks: Vec<(String, bool)>,
    pub warnings: Vec<String>,
    pub lines: Vec<String>,
}

impl Report {
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    fn say(&mut self, msg: impl Into<String>) {
        self.lines.push(msg.into());
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect()
    }
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, rep: &mut Report, name: &str) -> Outcome<BufWriter<File>> {
        let p = self.path(name);
        rep.files.push(p.clone());
        Ok(BufWriter::new(File::create(p)?))
    }

    fn plot(&self, rep: &mut Report, stem: &str, panels: &[Panel]) -> Outcome<()> {
        let mut f = self.create(rep, &format!("plot_{stem}.py"))?;
        f.write_all(script(stem, panels).as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn flow(&self) -> Outcome<FlowSystem> {
        let ind = self.cfg.induced()?;
        let tower = self.tower(ind)?;
        Ok(FlowSystem::new(tower, self.cfg.roof()?)?)
    }

    fn tower(&self, ind: Arc<flowdecay::InducedMap64>) -> Outcome<Tower<f64>> {
        Ok(match self.cfg.tower.theta {
            Some(theta) => Tower::new(ind, theta)?,
            None => Tower::with_default_theta(ind)?,
        })
    }
}

fn write_rows(w: impl Write, header: &[&str], rows: &[Vec<String>]) -> Outcome<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn e(x: f64) -> String {
    format!("{x:e}")
}

pub fn induce(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let ind = ctx.cfg.induced()?;
    ind.write_csv(ctx.create(&mut rep, "induced.csv")?)?;
    let mass = ind.represented_mass() + ind.tail_mass();
    rep.check("cell and tail masses sum to one", (mass - 1.0).abs() < 1e-10);
    let cond = ind.check_conditions(200);
    rep.check("Gibbs-Markov conditions", cond.holds());
    rep.say(format!("{} cells, represented mass {:.12}, tail mass {:.3e}", ind.cells().len(), ind.represented_mass(), ind.tail_mass()));
    ctx.plot(&mut rep, "induce", &[Panel::new("induced.csv", "r", &["weight"], "cell weight by return time").log_log()])?;
    Ok(rep)
}

pub fn tail(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let ind = ctx.cfg.induced()?;
    let [lo, hi] = ctx.cfg.grids.tail_window;
    let fit = ind.fit_tail_exponent(lo, hi, false)?;
    let (exponent, label) = match &fit {
        TailFit::PowerLaw(f) => (Some(f.exponent), e(f.exponent)),
        TailFit::ExponentialTail => (None, String::new()),
    };
    let mut rows = Vec::new();
    let mut n = 1usize;
    while n <= hi {
        let t = ind.return_time_tail(n);
        rows.push(vec![n.to_string(), e(t.total), e(t.partial), e(t.extrapolated), label.clone()]);
        n = ((n as f64) * 1.25).ceil() as usize;
    }
    write_rows(ctx.create(&mut rep, "tail.csv")?, &["n", "tail", "partial", "extrapolated", "fit_exponent"], &rows)?;
    match (exponent, ind.declared_tail()) {
        (Some(x), Some(d)) => {
            rep.say(format!("fitted exponent {x:.4}, declared β + 1 = {:.4}", d.beta + 1.0));
            rep.check("fitted tail exponent within 0.15 of β + 1", (x - d.beta - 1.0).abs() <= 0.15);
        }
        (Some(x), None) => rep.say(format!("fitted exponent {x:.4}")),
        (None, _) => rep.say("return time is bounded on the window"),
    }
    ctx.plot(&mut rep, "tail", &[Panel::new("tail.csv", "n", &["tail"], "μ_Y(r > n)").log_log()])?;
    Ok(rep)
}

pub fn tower(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let t = ctx.tower(ctx.cfg.induced()?)?;
    t.write_csv(ctx.create(&mut rep, "tower.csv")?)?;
    let total = t.represented_measure() + t.tail_measure();
    rep.check("tower measure is one", (total - 1.0).abs() < 1e-10);
    rep.check("base invariance up to the tail", t.base_invariance_defect() <= t.tail_measure() + 1e-10);
    rep.say(format!("mean return {:.10}, tail measure {:.3e}", t.mean_return(), t.tail_measure()));
    ctx.plot(&mut rep, "tower", &[Panel::new("tower.csv", "j", &["measure"], "level measure").log_y()])?;
    Ok(rep)
}

pub fn truncate(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let t = ctx.tower(ctx.cfg.induced()?)?;
    let mut id_rows = Vec::new();
    let mut ek_rows = Vec::new();
    for &n in &ctx.cfg.grids.truncation {
        let tt = t.truncate(n)?;
        tt.write_csv(ctx.create(&mut rep, &format!("truncated_{n}.csv"))?)?;
        let id = tt.identities();
        rep.check(format!("N = {n}: identities to 1e-12"), id.max_error() <= 1e-12);
        id_rows.push(vec![
            n.to_string(),
            e(id.mean_gap),
            e(id.mean_gap_formula),
            e(id.right_measure),
            e(id.right_measure_formula),
            e(id.max_error()),
        ]);
        for &k in &ctx.cfg.grids.ek {
            let m = tt.ek_measure(k)?;
            rep.check(format!("N = {n}, k = {k}: μ(E_k) bound"), m.holds());
            ek_rows.push(vec![n.to_string(), k.to_string(), e(m.measured), e(m.bound)]);
        }
    }
    write_rows(
        ctx.create(&mut rep, "identities.csv")?,
        &["N", "mean_gap", "mean_gap_formula", "right_measure", "right_measure_formula", "error"],
        &id_rows,
    )?;
    write_rows(ctx.create(&mut rep, "ek.csv")?, &["N", "k", "measured", "bound"], &ek_rows)?;
    ctx.plot(
        &mut rep,
        "truncate",
        &[
            Panel::new("identities.csv", "N", &["mean_gap", "right_measure"], "truncation identities").log_log(),
            Panel::new("ek.csv", "k", &["measured", "bound"], "μ(E_k)").log_y(),
        ],
    )?;
    Ok(rep)
}

pub fn corr_map(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let b = &ctx.cfg.basis;
    let op = TowerOperator::binned(ctx.cfg.basis()?, b.unit_until, b.r_max, b.ratio)?;
    let (name, v) = ctx.cfg.observables()?.remove(0);
    let corr = map_correlation_operator(&op, |x| v.eval(x, 0.0, 1.0), |x| v.eval(x, 0.0, 1.0), ctx.cfg.grids.map_corr_n);
    let series = corr.as_series();
    series.write_csv(ctx.create(&mut rep, "corr_map.csv")?)?;
    let [lo, hi] = ctx.cfg.grids.fit_window;
    match fit_decay(&series, (lo, hi), false) {
        Ok(fit) => {
            rep.say(format!("{name}: fitted exponent {:.4} on [{lo}, {hi}]", fit.exponent));
            if let Some(d) = ctx.cfg.induced()?.declared_tail() {
                rep.check("map correlation exponent within 0.25 of β", (fit.exponent - d.beta).abs() <= 0.25);
            }
        }
        Err(err) => rep.warn(format!("no decay fit: {err}")),
    }
    ctx.plot(&mut rep, "corr_map", &[Panel::new("corr_map.csv", "t", &["rho"], "map correlation").log_log()])?;
    Ok(rep)
}

pub fn corr_flow(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let sys = ctx.flow()?;
    let g = &ctx.cfg.grids;
    let mut panels = Vec::new();
    for (name, v) in ctx.cfg.observables()? {
        let s = correlation_mc(&sys, &v, &v, &g.t, g.n_samples, ctx.seed)?;
        let file = format!("corr_flow_{name}.csv");
        s.write_csv(ctx.create(&mut rep, &file)?)?;
        rep.say(format!("{name}: ρ({}) = {:.4e} ± {:.1e}", g.t[g.t.len() - 1], s.rho[s.rho.len() - 1], s.stderr[s.stderr.len() - 1]));
        panels.push(Panel::new(&file, "t", &["rho"], &format!("flow correlation, {name}")));
    }
    ctx.plot(&mut rep, "corr_flow", &panels)?;
    Ok(rep)
}

pub fn trunc_error(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let sys = ctx.flow()?;
    let g = &ctx.cfg.grids;
    let t_grid: Vec<f64> = g.t.iter().copied().filter(|&t| t > 0.0).collect();
    let t_grid = if t_grid.is_empty() { g.t.clone() } else { t_grid };
    let mut panels = Vec::new();
    for (name, v) in ctx.cfg.observables()? {
        let tab = truncation_error_experiment(&sys, &v, &v, &g.truncation, &t_grid, g.n_samples, ctx.seed)?;
        let file = format!("trunc_error_{name}.csv");
        tab.write_csv(ctx.create(&mut rep, &file)?)?;
        rep.say(format!("{name}: C = {:.4e}, stability {:.3}", tab.c_fit, tab.stability()));
        rep.check(format!("{name}: bound holds with one constant"), tab.holds());
        rep.check(format!("{name}: constant stable within factor 3"), tab.stability() <= 3.0);
        panels.push(Panel::new(&file, "N", &["diff", "bound"], &format!("truncation error, {name}")).log_log());
    }
    ctx.plot(&mut rep, "trunc_error", &panels)?;
    Ok(rep)
}

pub fn roof_trunc(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let sys = ctx.flow()?;
    let g = &ctx.cfg.grids;
    let t_grid: Vec<f64> = g.t.iter().copied().filter(|&t| t > 0.0).collect();
    let t_grid = if t_grid.is_empty() { g.t.clone() } else { t_grid };
    let mut panels = Vec::new();
    for (name, v) in ctx.cfg.observables()? {
        let tab = roof_truncation_experiment(&sys, &v, &v, &g.truncation, &t_grid, g.q, g.n_samples, ctx.seed)?;
        let file = format!("roof_trunc_{name}.csv");
        tab.write_csv(ctx.create(&mut rep, &file)?)?;
        let second = tab.second_truncation.iter().map(|s| s.2.abs()).fold(0.0, f64::max);
        rep.say(format!("{name}: C = {:.4e}, stability {:.3}, second truncation ≤ {second:.2e}", tab.c_fit, tab.stability()));
        rep.check(format!("{name}: bound holds with one constant"), tab.holds());
        rep.check(format!("{name}: constant stable within factor 3"), tab.stability() <= 3.0);
        panels.push(Panel::new(&file, "N", &["diff", "bound"], &format!("roof truncation error, {name}")).log_log());
    }
    let mut rows = Vec::new();
    for &n in &g.truncation {
        for &k in &g.ek {
            match ekk_measure(&sys, n as f64, k as f64, g.n_samples) {
                Ok(m) => {
                    rep.check(format!("N = {n}, k = {k}: μ(E_k) bound"), m.measured <= m.bound + 3.0 * m.stderr);
                    rows.push(vec![n.to_string(), k.to_string(), e(m.measured), e(m.stderr), e(m.bound)]);
                }
                Err(err) => {
                    rep.warn(format!("E_k not measured: {err}"));
                    break;
                }
            }
        }
    }
    write_rows(ctx.create(&mut rep, "ekk.csv")?, &["N", "k", "measured", "stderr", "bound"], &rows)?;
    panels.push(Panel::new("ekk.csv", "k", &["measured", "bound"], "μ(E_k), roof truncation").log_y());
    ctx.plot(&mut rep, "roof_trunc", &panels)?;
    Ok(rep)
}

pub fn resolvent(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let basis = ctx.cfg.basis()?;
    let roof = ctx.cfg.roof()?;
    let g = &ctx.cfg.grids;
    let opts = ProbeOptions { random: g.probes, adversarial: 5, seed: ctx.seed };
    let scan = resolvent_scan(&basis, basis.induced(), &roof, &g.b, &g.omega, None, g.norm_c, opts)?;
    scan.write_csv(ctx.create(&mut rep, "resolvent.csv")?)?;
    match ctx.cfg.constant_roof_period() {
        Some(period) => {
            let exact = scan.rows.iter().all(|r| {
                let on = (r.b / period - (r.b / period).round()).abs() < 1e-12 && r.omega == 0.0;
                r.resonance == on
            });
            rep.check("constant roof flags exactly the lattice", exact);
        }
        None if !scan.flagged().is_empty() => rep.warn(format!("resonances flagged at b = {:?}", scan.flagged())),
        None => {}
    }
    if let Some(a) = scan.alpha_fit {
        rep.say(format!("fitted resolvent growth |b|^{a:.3}"));
    }
    ctx.plot(&mut rep, "resolvent", &[Panel::new("resolvent.csv", "b", &["norm_estimate"], "resolvent norm").log_log()])?;
    Ok(rep)
}

fn s_values(cfg: &ExperimentConfig) -> Vec<Complex64> {
    cfg.grids.s.iter().map(|s| Complex64::new(s[0], s[1])).collect()
}

pub fn renewal(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let roof = ctx.cfg.roof()?;
    let op = TowerOperator::truncated(ctx.cfg.basis()?, ctx.cfg.grids.n_trunc)?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for s in s_values(&ctx.cfg) {
        let data = renewal_build(&op.twisted(&roof, s), &roof, 5000)?;
        for c in data.check_grid(16)? {
            worst = worst.max(c.residual);
            rows.push(vec![s.re.to_string(), s.im.to_string(), e(c.z.re), e(c.z.im), e(c.residual)]);
        }
    }
    write_rows(ctx.create(&mut rep, "renewal.csv")?, &["s_re", "s_im", "z_re", "z_im", "residual"], &rows)?;
    rep.say(format!("worst relative residual {worst:.3e}"));
    rep.check("renewal identity to 1e-8", worst <= 1e-8);
    ctx.plot(&mut rep, "renewal", &[Panel::new("renewal.csv", "z_im", &["residual"], "renewal residual").log_y()])?;
    Ok(rep)
}

pub fn decomp(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let roof = ctx.cfg.roof()?;
    let op = TowerOperator::truncated(ctx.cfg.basis()?, ctx.cfg.grids.n_trunc)?;
    let mut rows = Vec::new();
    for s in s_values(&ctx.cfg) {
        let tw = op.twisted(&roof, s);
        for &n in &ctx.cfg.grids.decomp_n {
            let r = tower_operator_decomposition(&tw, n, 0.01, &roof)?;
            rep.check(format!("s = {s}, n = {n}: identity to 1e-8"), r.residual <= 1e-8);
            rep.check(format!("s = {s}, n = {n}: A, B, E vanish beyond N"), r.vanish_beyond);
            rows.push(vec![
                s.re.to_string(),
                s.im.to_string(),
                n.to_string(),
                r.n_trunc.to_string(),
                e(r.residual),
                e(r.c_a),
                e(r.c_b),
                e(r.c_e),
                (r.vanish_beyond as u8).to_string(),
            ]);
        }
    }
    write_rows(
        ctx.create(&mut rep, "decomp.csv")?,
        &["s_re", "s_im", "n", "N", "residual", "c_a", "c_b", "c_e", "vanish_beyond"],
        &rows,
    )?;
    ctx.plot(&mut rep, "decomp", &[Panel::new("decomp.csv", "n", &["residual"], "decomposition residual").log_y()])?;
    Ok(rep)
}

pub fn laplace(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let roof = ctx.cfg.roof()?;
    let g = &ctx.cfg.grids;
    let op = TowerOperator::truncated(ctx.cfg.basis()?, g.n_trunc)?;
    let sys = ctx.flow()?.with_return_truncation(g.n_trunc);
    let mut rows = Vec::new();
    for (name, v) in ctx.cfg.observables()? {
        for s in s_values(&ctx.cfg) {
            if s.re <= 0.0 {
                rep.warn(format!("s = {s} skipped: the transform needs Re s > 0"));
                continue;
            }
            let series = laplace_series(&op, &roof, &v, &v, s, 10_000)?;
            let mc = laplace_mc(&sys, &v, &v, s, g.laplace_t_max, g.laplace_panels, g.n_samples, ctx.seed)?;
            let gap = (series.value - mc.value).norm();
            if gap > 4.0 * mc.stderr {
                rep.warn(format!("{name}, s = {s}: series and Monte Carlo differ by {gap:.2e} (se {:.2e}); a finer basis (depth, refine) narrows this", mc.stderr));
            }
            rows.push(vec![
                name.clone(),
                s.re.to_string(),
                s.im.to_string(),
                e(series.value.re),
                e(series.value.im),
                e(mc.value.re),
                e(mc.value.im),
                e(mc.stderr),
            ]);
        }
    }
    write_rows(
        ctx.create(&mut rep, "laplace.csv")?,
        &["observable", "s_re", "s_im", "series_re", "series_im", "mc_re", "mc_im", "mc_stderr"],
        &rows,
    )?;
    ctx.plot(&mut rep, "laplace", &[Panel::new("laplace.csv", "s_im", &["series_re", "mc_re"], "Laplace transform")])?;
    Ok(rep)
}

/// `(ln t)^a / t^b` with exponents rounded to two decimals.
pub fn rate_label(exponent: f64, log_power: f64) -> String {
    let fmt = |x: f64| {
        let r = (x * 100.0).round() / 100.0;
        if r == r.trunc() {
            format!("{}", r as i64)
        } else {
            format!("{r}")
        }
    };
    let num = match fmt(log_power).as_str() {
        "0" => "1".to_string(),
        "1" => "ln t".to_string(),
        p => format!("(ln t)^{p}"),
    };
    let den = match fmt(exponent).as_str() {
        "0" => String::new(),
        "1" => "/t".to_string(),
        p => format!("/t^{p}"),
    };
    format!("{num}{den}")
}

pub fn budget(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let b = &ctx.cfg.budget;
    let schedule = b.schedule()?;
    let tail = match (b.beta, b.gamma) {
        (Some(beta), gamma) => TailData::power_law(beta, gamma.unwrap_or(0.0), b.horizon)?,
        (None, _) => TailData::from_induced(ctx.cfg.induced()?.as_ref(), b.horizon)?,
    };
    let (beta, gamma) = (tail.beta(), tail.gamma());
    let q = match b.q {
        Some(q) => q,
        None => 1.2 * budget_constraints(beta, gamma, b.p, b.d, 1.0, b.eps, schedule).q_min,
    };
    let budget = rate_budget(&tail, b.p, b.d, q, b.eps, schedule, (b.t_range[0], b.t_range[1]), b.points)?;
    budget.write_csv(ctx.create(&mut rep, "budget.csv")?)?;
    let upper = &budget.rows[budget.rows.len() / 2..];
    let dom = upper[upper.len() - 1].dominant;
    let (fx, fl) = budget.term_fits[dom];
    let (want_log, want_label) = match schedule {
        Schedule::Bounded => (gamma, rate_label(beta, gamma)),
        Schedule::Unbounded => (beta + 1.0, rate_label(beta, beta + 1.0)),
    };
    let agrees = (fx - beta).abs() < 0.01 && (fl - want_log).abs() < 0.2;
    let label = if agrees { want_label.clone() } else { rate_label(fx, fl) };
    rep.say(format!("dominant term {} decays like {label} (fit t^-{fx:.4} (ln t)^{fl:.3})", dom + 1));
    rep.check(format!("dominant term reproduces {want_label}"), agrees);
    let c = &budget.constraints;
    write_rows(
        ctx.create(&mut rep, "budget_summary.csv")?,
        &["beta", "gamma", "p", "d", "q", "eps", "schedule", "p_threshold", "d_max", "q_min", "dominant", "fit_exponent", "fit_log_power", "dominant_rate"],
        &[vec![
            beta.to_string(),
            gamma.to_string(),
            b.p.to_string(),
            b.d.to_string(),
            q.to_string(),
            b.eps.to_string(),
            b.schedule.clone(),
            c.p_threshold.to_string(),
            c.d_max.to_string(),
            c.q_min.to_string(),
            (dom + 1).to_string(),
            fx.to_string(),
            fl.to_string(),
            label,
        ]],
    )?;
    let chk = dn_growth_check(&tail, 1e2, 1e14, 25);
    rep.check("d_N follows its growth class", chk.nondecreasing && chk.spread < 1.1);
    let rows: Vec<Vec<String>> = chk.ratios.iter().map(|(n, r)| vec![n.to_string(), e(tail.d_n(*n)), e(*r)]).collect();
    write_rows(ctx.create(&mut rep, "d_n.csv")?, &["N", "d_N", "ratio_to_class"], &rows)?;
    let ex = ColumnConstantExample::new(beta)?;
    let yn = ex.report(10.0, 1e12, 40)?;
    rep.check("μ_Y(Y(n)) below its bound", yn.bound_constant < 1.0 && yn.bound_ratio_decay < 1.0);
    let rows: Vec<Vec<String>> = yn
        .rows
        .iter()
        .map(|&(n, y, d)| {
            let lb = n.ln();
            vec![e(n), e(y), e(d), e(lb.powf(beta + 2.0) * n.powf(-(beta + 1.0))), e(lb.powf(beta + 1.0) * n.powf(-(beta + 1.0)))]
        })
        .collect();
    write_rows(ctx.create(&mut rep, "y_n.csv")?, &["n", "y_tail", "delta_tail", "bound", "sharp"], &rows)?;
    ctx.plot(
        &mut rep,
        "budget",
        &[
            Panel::new("budget.csv", "t", &["term1", "term2", "term3", "term4", "predicted_rate"], "rate budget").log_log(),
            Panel::new("d_n.csv", "N", &["ratio_to_class"], "d_N over its class shape").log_log(),
            Panel::new("y_n.csv", "n", &["y_tail", "bound", "sharp"], "μ_Y(Y(n))").log_log(),
        ],
    )?;
    Ok(rep)
}

fn subsystem(ctx: &Ctx) -> Outcome<FiniteSubsystem> {
    Ok(FiniteSubsystem::new(ctx.cfg.induced()?, ctx.cfg.periodic.symbols.clone())?)
}

pub fn periodic(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let sub = subsystem(ctx)?;
    let roof = ctx.cfg.roof()?;
    let triples = enumerate_periodic(&sub, &roof, ctx.cfg.periodic.q_max)?;
    write_triples_csv(&triples, ctx.create(&mut rep, "triples.csv")?)?;
    let reports = diophantine_sweep(&triples, &ctx.cfg.grids.b, &ctx.cfg.grids.omega)?;
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for r in &reports {
        let file = format!("periodic_scan_beta0_{}_alpha_{}_c_{}.csv", r.beta0, r.alpha, r.c);
        r.write_csv(ctx.create(&mut rep, &file)?)?;
        if r.degenerate_single_orbit {
            rep.warn("a single periodic orbit: the test is degenerate");
        }
        rows.push(vec![
            r.beta0.to_string(),
            r.alpha.to_string(),
            r.c.to_string(),
            r.passing().count().to_string(),
            r.evidence.to_string(),
            (r.degenerate_single_orbit as u8).to_string(),
            file.clone(),
        ]);
        if panels.is_empty() {
            panels.push(Panel::new(&file, "b", &["residual"], "scan residual").log_log());
        }
    }
    write_rows(
        ctx.create(&mut rep, "periodic_summary.csv")?,
        &["beta0", "alpha", "c", "passing", "evidence", "degenerate", "file"],
        &rows,
    )?;
    rep.say(format!("{} orbits up to period {}; {} parameter combinations", triples.len(), ctx.cfg.periodic.q_max, reports.len()));
    ctx.plot(&mut rep, "periodic", &panels)?;
    Ok(rep)
}

pub fn eigenfun(ctx: &Ctx) -> Outcome<Report> {
    let mut rep = Report::default();
    let sub = subsystem(ctx)?;
    let roof = ctx.cfg.roof()?;
    let p = &ctx.cfg.periodic;
    let opts = EigenOptions {
        word_len: p.word_len,
        cylinder_depth: p.cylinder_depth,
        starts: p.starts,
        c: p.c,
        seed: ctx.seed,
        ..EigenOptions::default()
    };
    let r = approx_eigenfunction_search(&sub, &roof, &ctx.cfg.grids.b, &ctx.cfg.grids.omega, p.beta0, p.alpha, opts)?;
    r.write_csv(ctx.create(&mut rep, "eigenfun.csv")?)?;
    if r.nonconverged > 0 {
        rep.warn(format!("{} grid points did not settle", r.nonconverged));
    }
    rep.say(format!("{} of {} grid points pass: {}", r.passing().count(), r.rows.len(), r.evidence));
    ctx.plot(&mut rep, "eigenfun", &[Panel::new("eigenfun.csv", "b", &["residual"], "eigenfunction residual").log_log()])?;
    Ok(rep)
}

pub fn accept(ctx: &Ctx, threads: Option<usize>) -> Outcome<Report> {
    let mut rep = Report::default();
    let mut opts = AcceptanceOptions { mc_samples: ctx.cfg.accept.mc_samples, seed: ctx.seed, ..AcceptanceOptions::default() };
    if let Some(n) = threads {
        opts.threads.0 = n;
    }
    let outcomes = run_suite(&opts, &ctx.cfg.accept.criteria, |o| println!("{o}"))?;
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| vec![o.id.to_string(), o.title().to_string(), (o.pass as u8).to_string(), o.detail.clone()])
        .collect();
    write_rows(ctx.create(&mut rep, "accept.csv")?, &["criterion", "title", "pass", "detail"], &rows)?;
    for o in &outcomes {
        rep.check(format!("criterion {}: {}", o.id, o.title()), o.pass);
    }
    ctx.plot(&mut rep, "accept", &[Panel::new("accept.csv", "criterion", &["pass"], "acceptance")])?;
    Ok(rep)
}

pub fn ensure_dir(p: &Path) -> Outcome<()> {
    std::fs::create_dir_all(p).map_err(|e| Failure::Config(format!("cannot create {}: {e}", p.display())))
}

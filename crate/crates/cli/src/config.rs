//! TOML experiment configuration.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flowdecay::maps::{InducedMap, MapModel};
use flowdecay::roof::{Observable, Roof};
use flowdecay::transfer::{CylinderBasis, Schedule};
use serde::Deserialize;

/// Problems that map to exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub tower: TowerSpec,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub roof: RoofSpec,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub periodic: PeriodicSpec,
    #[serde(default)]
    pub accept: AcceptSpec,
}

fn default_observables() -> Vec<String> {
    vec!["coordinate".into()]
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// `pm` or `doubling`.
    pub kind: String,
    pub alpha: Option<f64>,
    /// Inducing interval; `[1/2, 1]` for PM and `[0, 1]` for doubling by default.
    pub base: Option<[f64; 2]>,
    /// Number of explicitly stored cells `J`.
    pub cutoff: usize,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self { kind: "pm".into(), alpha: Some(0.5), base: None, cutoff: 400 }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TowerSpec {
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSpec {
    /// Branches kept individually by the transfer operator.
    pub cutoff: usize,
    /// Cylinder depth `k`.
    pub depth: usize,
    pub refine: usize,
    /// Binning of long columns for untruncated operators.
    pub unit_until: usize,
    pub r_max: usize,
    pub ratio: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { cutoff: 40, depth: 2, refine: 2, unit_until: 1000, r_max: 20_000, ratio: 1.02 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RoofSpec {
    Constant { value: f64 },
    Cosine { base: f64, amp: f64 },
    Singular { beta: f64 },
}

impl Default for RoofSpec {
    fn default() -> Self {
        RoofSpec::Cosine { base: 2.0, amp: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub t: Vec<f64>,
    /// Return-time or roof truncation levels.
    pub truncation: Vec<usize>,
    /// `k` values for `μ(E_k)`.
    pub ek: Vec<usize>,
    pub b: Vec<f64>,
    pub omega: Vec<f64>,
    /// Laplace variables `[re, im]`.
    pub s: Vec<[f64; 2]>,
    pub decomp_n: Vec<usize>,
    /// Truncation level for the operator-level subcommands.
    pub n_trunc: usize,
    pub n_samples: usize,
    pub tail_window: [usize; 2],
    pub map_corr_n: usize,
    pub fit_window: [f64; 2],
    /// `r' = min{r, [q ln N]}` in the roof truncation.
    pub q: f64,
    pub laplace_t_max: f64,
    pub laplace_panels: usize,
    /// Weight `c` in `‖v‖_b = max(|v|_∞, |v|_θ / (c(1 + |b|)))`.
    pub norm_c: f64,
    pub probes: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            t: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0],
            truncation: vec![10, 20, 40],
            ek: vec![1, 5, 10],
            b: vec![2.0, 10.0, 50.0],
            omega: vec![0.0],
            s: vec![[0.0, 0.0], [0.0, 0.1], [0.3, 2.0]],
            decomp_n: vec![1, 5, 15, 21],
            n_trunc: 30,
            n_samples: 100_000,
            tail_window: [100, 10_000],
            map_corr_n: 500,
            fit_window: [10.0, 500.0],
            q: 2.0,
            laplace_t_max: 60.0,
            laplace_panels: 60,
            norm_c: 2.6,
            probes: 60,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSpec {
    /// Tail exponent; the map's declared value when absent.
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub p: f64,
    pub d: f64,
    /// `1.2 q_min` when absent.
    pub q: Option<f64>,
    pub eps: f64,
    /// `bounded` or `unbounded`.
    pub schedule: String,
    pub t_range: [f64; 2],
    pub points: usize,
    pub horizon: usize,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self {
            beta: None,
            gamma: None,
            p: 3.0,
            d: 0.1,
            q: None,
            eps: 0.1,
            schedule: "bounded".into(),
            t_range: [1e3, 1e120],
            points: 60,
            horizon: 2000,
        }
    }
}

impl BudgetSpec {
    pub fn schedule(&self) -> Result<Schedule, ConfigError> {
        match self.schedule.as_str() {
            "bounded" => Ok(Schedule::Bounded),
            "unbounded" => Ok(Schedule::Unbounded),
            other => Err(bad(format!("unknown schedule '{other}' (bounded, unbounded)"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PeriodicSpec {
    /// Induced-map cells forming the finite subsystem.
    pub symbols: Vec<usize>,
    pub q_max: usize,
    pub beta0: f64,
    pub alpha: f64,
    pub c: f64,
    pub word_len: usize,
    pub cylinder_depth: usize,
    pub starts: usize,
}

impl Default for PeriodicSpec {
    fn default() -> Self {
        Self { symbols: vec![0, 1], q_max: 6, beta0: 2.0, alpha: 2.0, c: 1.0, word_len: 6, cylinder_depth: 3, starts: 6 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptSpec {
    pub criteria: Vec<usize>,
    pub mc_samples: usize,
}

impl Default for AcceptSpec {
    fn default() -> Self {
        Self { criteria: (1..=11).collect(), mc_samples: 1_000_000 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Built-in profile used when `accept` runs without a file.
    pub fn acceptance_profile() -> Self {
        let mut c = Self::from_toml("").expect("defaults parse");
        c.seed = Some(flowdecay::acceptance::AcceptanceOptions::default().seed);
        c
    }

    /// Checks everything that can be checked without building objects.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grids;
        let nonempty = [
            ("grids.t", g.t.is_empty()),
            ("grids.truncation", g.truncation.is_empty()),
            ("grids.ek", g.ek.is_empty()),
            ("grids.b", g.b.is_empty()),
            ("grids.omega", g.omega.is_empty()),
            ("grids.s", g.s.is_empty()),
            ("grids.decomp_n", g.decomp_n.is_empty()),
            ("observables", self.observables.is_empty()),
            ("periodic.symbols", self.periodic.symbols.is_empty()),
            ("accept.criteria", self.accept.criteria.is_empty()),
        ];
        if let Some((name, _)) = nonempty.iter().find(|x| x.1) {
            return Err(bad(format!("{name} must not be empty")));
        }
        if g.t.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(bad("grids.t must hold finite nonnegative times"));
        }
        if g.truncation.contains(&0) || g.ek.contains(&0) || g.n_trunc == 0 {
            return Err(bad("truncation levels and k values must be positive"));
        }
        if g.n_samples < 100 {
            return Err(bad("grids.n_samples must be at least 100"));
        }
        if g.tail_window[1] < 4 * g.tail_window[0] || g.tail_window[0] == 0 {
            return Err(bad("grids.tail_window needs 1 ≤ lo and hi ≥ 4 lo"));
        }
        if !(g.fit_window[0] > 1.0 && g.fit_window[1] > g.fit_window[0]) {
            return Err(bad("grids.fit_window needs 1 < lo < hi"));
        }
        if let Some(bad_id) = self.accept.criteria.iter().find(|&&i| !(1..=11).contains(&i)) {
            return Err(bad(format!("accept.criteria: no criterion {bad_id}")));
        }
        for name in &self.observables {
            Observable::from_name(name).map_err(|e| bad(e.to_string()))?;
        }
        self.budget.schedule()?;
        self.map_model()?;
        self.roof()?;
        Ok(())
    }

    pub fn map_model(&self) -> Result<MapModel<f64>, ConfigError> {
        match (self.map.kind.as_str(), self.map.alpha) {
            ("doubling", _) => Ok(MapModel::doubling()),
            ("pm", Some(a)) => MapModel::pomeau_manneville(a).map_err(|e| bad(e.to_string())),
            ("pm", None) => Err(bad("map.alpha is required for kind = \"pm\"")),
            (other, _) => Err(bad(format!("unknown map kind '{other}' (pm, doubling)"))),
        }
    }

    pub fn base(&self) -> (f64, f64) {
        match (self.map.base, self.map.kind.as_str()) {
            (Some([a, b]), _) => (a, b),
            (None, "doubling") => (0.0, 1.0),
            (None, _) => (0.5, 1.0),
        }
    }

    pub fn induced(&self) -> Result<Arc<InducedMap<f64>>, ConfigError> {
        let map = self.map_model()?;
        InducedMap::induce(&map, self.base(), self.map.cutoff).map(Arc::new).map_err(|e| bad(e.to_string()))
    }

    pub fn basis(&self) -> Result<Arc<CylinderBasis>, ConfigError> {
        let ind = self.induced()?;
        let cutoff = self.basis.cutoff.min(ind.cells().len());
        CylinderBasis::new(ind, cutoff, self.basis.depth, self.basis.refine)
            .map(Arc::new)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn roof(&self) -> Result<Roof, ConfigError> {
        match self.roof {
            RoofSpec::Constant { value } => Roof::constant(value),
            RoofSpec::Cosine { base, amp } => Roof::cosine(base, amp),
            RoofSpec::Singular { beta } => Roof::singular(beta),
        }
        .map_err(|e| bad(e.to_string()))
    }

    /// Resonance lattice `2πℤ/c` of a constant roof `c`.
    pub fn constant_roof_period(&self) -> Option<f64> {
        match self.roof {
            RoofSpec::Constant { value } => Some(TAU / value),
            _ => None,
        }
    }

    pub fn observables(&self) -> Result<Vec<(String, Observable)>, ConfigError> {
        self.observables
            .iter()
            .map(|n| Observable::from_name(n).map(|o| (n.clone(), o)).map_err(|e| bad(e.to_string())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_the_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.map.kind, "pm");
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seed = 1
            observables = ["coordinate", "cos-u"]
            [map]
            kind = "doubling"
            cutoff = 2
            [roof]
            kind = "constant"
            value = 1.0
            [grids]
            t = [0.0, 1.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.roof, RoofSpec::Constant { value: 1.0 });
        assert_eq!(cfg.base(), (0.0, 1.0));
        assert_eq!(cfg.grids.truncation, vec![10, 20, 40]);
        assert!(cfg.validate().is_ok());
        assert!((cfg.constant_roof_period().unwrap() - TAU).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_refused() {
        for text in [
            "seed = 1\nunknown = 2",
            "seed = 1\n[map]\nkind = \"tent\"\ncutoff = 10",
            "seed = 1\n[map]\nkind = \"pm\"\ncutoff = 10",
            "seed = 1\nobservables = [\"nope\"]",
            "seed = 1\n[grids]\nt = []",
            "seed = 1\n[roof]\nkind = \"cosine\"\nbase = 1.0\namp = 2.0",
            "seed = 1\n[budget]\nschedule = \"sometimes\"",
            "seed = 1\n[accept]\ncriteria = [12]",
        ] {
            let r = ExperimentConfig::from_toml(text).and_then(|c| c.validate());
            assert!(r.is_err(), "{text}");
        }
    }
}

//! Experiment configuration files.
//!
//! The format is flat `key = value` text. `#` starts a comment, and a
//! `[kind]` header opens a section whose keys only apply to that experiment
//! kind. Lists are comma separated; pairs are written `x:y`.
//!
//! ```text
//! kind = jumps
//! beta = 0.5
//! N = 1000
//! t_end = 0.5
//! replicas = 200
//! seed = 7
//!
//! [jumps]
//! y = 0.05, 0.1, 0.2
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sbmlab_core::error::check_beta;
use sbmlab_core::kernels_green::FiniteMeasure;
use sbmlab_core::particle_sbm::{ModelParams, UniformPanel, DEFAULT_PARTICLE_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simulate,
    Duality,
    Tanaka,
    Moments,
    Jumps,
    Timechange,
    Stabletails,
    Criterion,
    Holder,
    Unbounded2d,
}

impl Kind {
    pub const ALL: [Kind; 10] = [
        Kind::Simulate,
        Kind::Duality,
        Kind::Tanaka,
        Kind::Moments,
        Kind::Jumps,
        Kind::Timechange,
        Kind::Stabletails,
        Kind::Criterion,
        Kind::Holder,
        Kind::Unbounded2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Duality => "duality",
            Kind::Tanaka => "tanaka",
            Kind::Moments => "moments",
            Kind::Jumps => "jumps",
            Kind::Timechange => "timechange",
            Kind::Stabletails => "stabletails",
            Kind::Criterion => "criterion",
            Kind::Holder => "holder",
            Kind::Unbounded2d => "unbounded2d",
        }
    }

    /// Kinds that run the branching particle system.
    pub fn uses_particles(self) -> bool {
        !matches!(self, Kind::Stabletails | Kind::Criterion)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

/// Test functions available to the `simulate` kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFn {
    /// f ≡ 1.
    Mass,
    /// exp(-x²).
    Gauss,
    /// max(0, 1 - |x|).
    Tent,
    /// Smoothed indicator of [-1/2, 1/2]: a cubic ramp over width 1/4 on each side.
    Ramp,
}

impl TestFn {
    pub fn name(self) -> &'static str {
        match self {
            TestFn::Mass => "mass",
            TestFn::Gauss => "gauss",
            TestFn::Tent => "tent",
            TestFn::Ramp => "ramp",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFn::Mass => 1.0,
            TestFn::Gauss => (-x * x).exp(),
            TestFn::Tent => (1.0 - x.abs()).max(0.0),
            TestFn::Ramp => smooth_indicator(-0.5, 0.5, 0.25, x),
        }
    }

    /// Points where the function is not smooth, for quadrature.
    pub fn kinks(self) -> Vec<f64> {
        match self {
            TestFn::Mass | TestFn::Gauss => Vec::new(),
            TestFn::Tent => vec![-1.0, 0.0, 1.0],
            TestFn::Ramp => vec![-0.75, -0.5, 0.5, 0.75],
        }
    }
}

impl FromStr for TestFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [TestFn::Mass, TestFn::Gauss, TestFn::Tent, TestFn::Ramp]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown test function `{s}`"))
    }
}

/// 1 on [lo, hi], 0 outside [lo - w, hi + w], joined by the cubic 3u² - 2u³.
pub fn smooth_indicator(lo: f64, hi: f64, w: f64, x: f64) -> f64 {
    let ramp = |d: f64| {
        let u = (d / w).clamp(0.0, 1.0);
        u * u * (3.0 - 2.0 * u)
    };
    ramp(x - (lo - w)).min(ramp(hi + w - x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub beta: f64,
    pub n_scale: u64,
    pub dim: usize,
    pub t_end: f64,
    /// Step bound; `None` uses 0.1 / branch_rate.
    pub dt: Option<f64>,
    pub snapshot_dt: f64,
    pub particle_cap: usize,
}

impl ModelConfig {
    pub fn params(&self) -> ModelParams {
        let mut p = ModelParams::new(self.beta, self.n_scale, self.dim, self.t_end)
            .with_snapshot_dt(self.snapshot_dt)
            .with_cap(self.particle_cap);
        if let Some(dt) = self.dt {
            p = p.with_dt(dt);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl PanelSpec {
    pub fn panel(&self) -> UniformPanel {
        UniformPanel::new(self.lo, self.hi, self.points).expect("panel validated at load")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KindParams {
    Simulate {
        functions: Vec<TestFn>,
        times: Vec<f64>,
    },
    Duality {
        phi_lo: f64,
        phi_hi: f64,
        phi_edge: f64,
        phi_height: f64,
        solver_dx: f64,
        solver_dt: f64,
    },
    Tanaka {
        lambdas: Vec<f64>,
        xs: Vec<f64>,
        panel: PanelSpec,
        bandwidth: f64,
    },
    Moments {
        lambda: f64,
        q: f64,
        x0: f64,
        distances: Vec<f64>,
        min_slope: f64,
    },
    Jumps {
        ys: Vec<f64>,
        slope_tol: f64,
    },
    Timechange {
        lambda: f64,
        x1: f64,
        x2: f64,
        thetas: Vec<f64>,
    },
    Stabletails {
        inf_x: Vec<f64>,
        steps: usize,
        min_hits: usize,
        slope_tol: f64,
        calibration: Vec<(f64, f64)>,
        holdout: Vec<(f64, f64)>,
    },
    Criterion {
        gamma: f64,
        q: f64,
        k: f64,
        r: f64,
        c: f64,
        n_max: usize,
        r_grid: Vec<f64>,
        flag_points: usize,
    },
    Holder {
        lambda: f64,
        panel: PanelSpec,
        level_lo: u32,
        level_hi: u32,
        min_fraction: f64,
    },
    Unbounded2d {
        window_lo: f64,
        window_hi: f64,
        fine_bins: usize,
        widths: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub model: ModelConfig,
    /// Initial measure in its text form (see [`FiniteMeasure`]'s `FromStr`).
    pub initial_measure: String,
    pub replicas: usize,
    pub first_replica: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub params: KindParams,
}

// Fields covered by the config hash: everything that changes the numbers
// of a given replica index.
#[derive(Serialize)]
struct Hashed<'a> {
    kind: Kind,
    model: &'a ModelConfig,
    initial_measure: &'a str,
    seed: u64,
    params: &'a KindParams,
}

impl ExperimentConfig {
    pub fn initial(&self) -> FiniteMeasure {
        self.initial_measure.parse().expect("initial measure validated at load")
    }

    /// First 16 hex digits of the SHA-256 of the replica-independent settings.
    pub fn hash(&self) -> String {
        let h = Hashed {
            kind: self.kind,
            model: &self.model,
            initial_measure: &self.initial_measure,
            seed: self.seed,
            params: &self.params,
        };
        let bytes = serde_json::to_vec(&h).expect("config serializes");
        let digest = format!("{:x}", Sha256::digest(&bytes));
        digest[..16].to_string()
    }

    pub fn replica_range(&self) -> std::ops::Range<u64> {
        self.first_replica..self.first_replica + self.replicas as u64
    }
}

/// Every problem found in a configuration, one message per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

type Entries = BTreeMap<String, (usize, String)>;

fn split_sections(text: &str, errors: &mut Vec<String>) -> (Entries, BTreeMap<String, Entries>) {
    let mut global = Entries::new();
    let mut sections: BTreeMap<String, Entries> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if name.parse::<Kind>().is_err() {
                errors.push(format!("line {ln}: unknown section [{name}]"));
            }
            sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {ln}: expected `key = value`, got `{line}`"));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        let target = match &current {
            Some(s) => sections.get_mut(s).unwrap(),
            None => &mut global,
        };
        if target.insert(k.clone(), (ln, v)).is_some() {
            errors.push(format!("line {ln}: duplicate key `{k}`"));
        }
    }
    (global, sections)
}

struct Reader<'a> {
    scope: String,
    entries: Entries,
    errors: &'a mut Vec<String>,
    // Off for sections of kinds other than the one being run: their keys
    // are still checked, but nothing is required.
    strict: bool,
}

impl<'a> Reader<'a> {
    fn new(scope: &str, entries: Entries, errors: &'a mut Vec<String>, strict: bool) -> Self {
        Self {
            scope: scope.to_string(),
            entries,
            errors,
            strict,
        }
    }

    fn missing(&mut self, key: &str) {
        if self.strict {
            let scope = self.scope.clone();
            self.err(format!("{scope}: missing required key `{key}`"));
        }
    }

    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let (ln, v) = self.entries.remove(key)?;
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(e) => {
                self.err(format!("line {ln}: bad value for `{key}` ({e})"));
                None
            }
        }
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        if !self.entries.contains_key(key) {
            self.missing(key);
            return None;
        }
        self.parse(key)
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        self.parse(key).unwrap_or(default)
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let (ln, v) = self.entries.remove(key)?;
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse::<T>() {
                Ok(x) => out.push(x),
                Err(e) => {
                    self.err(format!("line {ln}: bad list item `{item}` for `{key}` ({e})"));
                    return None;
                }
            }
        }
        if out.is_empty() {
            self.err(format!("line {ln}: `{key}` is an empty list"));
            return None;
        }
        Some(out)
    }

    fn list_or<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: fmt::Display,
    {
        self.list(key).unwrap_or(default)
    }

    fn pairs_or(&mut self, key: &str, default: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        let Some(items) = self.list::<String>(key) else {
            return default;
        };
        let mut out = Vec::new();
        for it in items {
            let parsed = it
                .split_once(':')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            match parsed {
                Some(p) => out.push(p),
                None => {
                    self.err(format!("`{key}`: expected `x:y`, got `{it}`"));
                    return default;
                }
            }
        }
        out
    }

    fn finish(self) {
        if !self.entries.is_empty() {
            let keys: Vec<String> = self.entries.iter().map(|(k, (ln, _))| format!("{k} (line {ln})")).collect();
            self.errors.push(format!("{}: unknown key(s): {}", self.scope, keys.join(", ")));
        }
    }
}

fn kind_params(kind: Kind, r: &mut Reader, model: &ModelConfig) -> KindParams {
    let t_end = model.t_end;
    match kind {
        Kind::Simulate => KindParams::Simulate {
            functions: r.list_or("functions", vec![TestFn::Mass, TestFn::Gauss]),
            times: r.list_or("times", vec![t_end]),
        },
        Kind::Duality => KindParams::Duality {
            phi_lo: r.or("phi_lo", -0.5),
            phi_hi: r.or("phi_hi", 0.5),
            phi_edge: r.or("phi_edge", 0.25),
            phi_height: r.or("phi_height", 1.0),
            solver_dx: r.or("solver_dx", 0.01),
            solver_dt: r.or("solver_dt", 0.0025),
        },
        Kind::Tanaka => {
            let panel = PanelSpec {
                lo: r.or("panel_lo", -2.0),
                hi: r.or("panel_hi", 2.0),
                points: r.or("panel_points", 321),
            };
            let spacing = (panel.hi - panel.lo) / (panel.points.max(2) - 1) as f64;
            KindParams::Tanaka {
                lambdas: r.list_or("lambda", vec![1.0]),
                xs: r.list_or("x", vec![0.25, 0.5]),
                bandwidth: r.or("bandwidth", 2.0 * spacing),
                panel,
            }
        }
        Kind::Moments => KindParams::Moments {
            lambda: r.or("lambda", 1.0),
            q: r.required("q").unwrap_or(f64::NAN),
            x0: r.or("x0", 0.0),
            distances: r.list_or("distances", vec![0.4, 0.2, 0.1, 0.05]),
            min_slope: r.or("min_slope", 0.85),
        },
        Kind::Jumps => KindParams::Jumps {
            ys: match r.list("y") {
                Some(v) => v,
                None => {
                    r.missing("y");
                    Vec::new()
                }
            },
            slope_tol: r.or("slope_tol", 0.1),
        },
        Kind::Timechange => KindParams::Timechange {
            lambda: r.or("lambda", 1.0),
            x1: r.or("x1", -0.1),
            x2: r.or("x2", 0.1),
            thetas: r.list_or("theta", vec![0.5, 1.0, 2.0]),
        },
        Kind::Stabletails => KindParams::Stabletails {
            inf_x: r.list_or("inf_x", vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
            steps: r.or("steps", sbmlab_core::stable_path::TAIL_STEPS),
            min_hits: r.or("min_hits", 20),
            slope_tol: r.or("slope_tol", 0.25),
            calibration: r.pairs_or("calibration", vec![(0.5, 0.1), (0.5, 0.2), (1.0, 0.2), (1.0, 0.4), (1.5, 0.5)]),
            holdout: r.pairs_or("holdout", vec![(1.0, 0.1), (0.75, 0.15), (1.25, 0.3), (1.5, 0.4)]),
        },
        Kind::Criterion => KindParams::Criterion {
            gamma: r.required("gamma").unwrap_or(f64::NAN),
            q: r.required("q").unwrap_or(f64::NAN),
            k: r.or("k", 1.0),
            r: r.or("r", 1.0),
            c: r.or("c", 1.0),
            n_max: r.or("n_max", 1 << 20),
            r_grid: r.list_or("r_grid", vec![1.0, 10.0, 100.0, 1000.0]),
            flag_points: r.or("flag_points", 10_000),
        },
        Kind::Holder => KindParams::Holder {
            lambda: r.or("lambda", 1.0),
            panel: PanelSpec {
                lo: r.or("panel_lo", -1.0),
                hi: r.or("panel_hi", 1.0),
                points: r.or("panel_points", 513),
            },
            level_lo: r.or("level_lo", 1),
            level_hi: r.or("level_hi", 5),
            min_fraction: r.or("min_fraction", 0.8),
        },
        Kind::Unbounded2d => KindParams::Unbounded2d {
            window_lo: r.or("window_lo", -0.4),
            window_hi: r.or("window_hi", 0.4),
            fine_bins: r.or("fine_bins", 16),
            widths: r.list_or("widths", vec![0.2, 0.1, 0.05]),
        },
    }
}

fn on_grid(t: f64, step: f64) -> bool {
    let r = t / step;
    (r - r.round()).abs() < 1e-9 * r.max(1.0)
}

fn validate(cfg: &ExperimentConfig, errors: &mut Vec<String>) {
    let m = &cfg.model;
    if let Err(e) = check_beta(m.beta) {
        errors.push(e.to_string());
    }
    if !(m.t_end >= 0.0 && m.t_end.is_finite()) {
        errors.push(format!("t_end must be nonnegative, got {}", m.t_end));
    }
    if cfg.kind.uses_particles() && m.beta > 0.0 && m.beta < 1.0 && m.t_end >= 0.0 {
        if let Err(e) = m.params().validate() {
            errors.push(e.to_string());
        }
    }
    if cfg.workers == 0 {
        errors.push("workers must be at least 1".into());
    }
    let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
    let panel_ok = |p: &PanelSpec, errors: &mut Vec<String>| -> Option<UniformPanel> {
        match UniformPanel::new(p.lo, p.hi, p.points) {
            Ok(pl) => Some(pl),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        }
    };
    match &cfg.params {
        KindParams::Simulate { times, .. } => {
            for &t in times {
                let snapped = t == 0.0 || t == m.t_end || (m.snapshot_dt > 0.0 && on_grid(t, m.snapshot_dt));
                if !(t >= 0.0 && t <= m.t_end) || !snapped {
                    errors.push(format!("simulate: time {t} must lie in [0, t_end] on the snapshot grid (set snapshot_dt)"));
                }
            }
        }
        KindParams::Duality {
            phi_lo,
            phi_hi,
            phi_edge,
            solver_dx,
            solver_dt,
            ..
        } => {
            if !(phi_lo < phi_hi) || !(*phi_edge > 0.0) || !(*solver_dx > 0.0) || !(*solver_dt > 0.0) {
                errors.push("duality: need phi_lo < phi_hi and positive phi_edge, solver_dx, solver_dt".into());
            }
        }
        KindParams::Tanaka {
            lambdas,
            xs,
            panel,
            bandwidth,
        } => {
            if !positive(lambdas) || !(*bandwidth > 0.0) {
                errors.push("tanaka: lambdas and bandwidth must be positive".into());
            }
            if let Some(pl) = panel_ok(panel, errors) {
                for &x in xs.iter().chain(std::iter::once(&0.0)) {
                    if pl.index_of(x).is_none() {
                        errors.push(format!("tanaka: x = {x} is not a panel point"));
                    }
                }
            }
        }
        KindParams::Moments { lambda, q, distances, .. } => {
            if !(*lambda > 0.0) || !positive(distances) {
                errors.push("moments: lambda and distances must be positive".into());
            }
            if !(*q > 1.0 && *q < 1.0 + m.beta) {
                errors.push(format!("moments: q = {q} outside (1, 1+beta)"));
            }
        }
        KindParams::Jumps { ys, .. } => {
            if !positive(ys) {
                errors.push("jumps: thresholds y must be positive".into());
            }
        }
        KindParams::Timechange { lambda, x1, x2, .. } => {
            if !(*lambda > 0.0) || !(x1 < x2) {
                errors.push("timechange: need lambda > 0 and x1 < x2".into());
            }
        }
        KindParams::Stabletails {
            inf_x,
            steps,
            calibration,
            holdout,
            ..
        } => {
            if !(m.t_end > 0.0) || *steps == 0 {
                errors.push("stabletails: need t_end > 0 and steps ≥ 1".into());
            }
            let flat: Vec<f64> = calibration.iter().chain(holdout).flat_map(|&(x, y)| [x, y]).collect();
            if !positive(inf_x) || !positive(&flat) {
                errors.push("stabletails: x and y values must be positive".into());
            }
            if calibration.iter().any(|c| holdout.contains(c)) {
                errors.push("stabletails: calibration and holdout grids must be disjoint".into());
            }
        }
        KindParams::Criterion { k, r, c, n_max, r_grid, .. } => {
            if !(*k > 0.0 && *r > 0.0 && *c > 0.0) || *n_max < 16 || !positive(r_grid) {
                errors.push("criterion: need positive k, r, c and r_grid, and n_max ≥ 16".into());
            }
        }
        KindParams::Holder {
            lambda,
            panel,
            level_lo,
            level_hi,
            min_fraction,
        } => {
            if !(*lambda > 0.0) || level_lo > level_hi || !(0.0..=1.0).contains(min_fraction) {
                errors.push("holder: need lambda > 0, level_lo ≤ level_hi, min_fraction in [0, 1]".into());
            }
            if panel.points < 64 {
                errors.push("holder: panel needs at least 64 points".into());
            }
            panel_ok(panel, errors);
        }
        KindParams::Unbounded2d {
            window_lo,
            window_hi,
            fine_bins,
            widths,
        } => {
            if !(window_lo < window_hi) || *fine_bins == 0 || !positive(widths) {
                errors.push("unbounded2d: need window_lo < window_hi, fine_bins ≥ 1, positive widths".into());
            } else {
                let fine = (window_hi - window_lo) / *fine_bins as f64;
                for &w in widths {
                    let f = (w / fine).round();
                    if f < 1.0 || (f * fine - w).abs() > 1e-9 * w || fine_bins % (f as usize) != 0 {
                        errors.push(format!("unbounded2d: width {w} is not a divisor-aligned multiple of {fine}"));
                    }
                }
            }
        }
    }
}

/// Parses configuration text. `base` resolves a relative `initial` path;
/// `kind` (from the command line) must agree with a `kind` key if both exist.
pub fn parse_config(text: &str, base: &Path, kind: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    let mut errors = Vec::new();
    let (global, mut sections) = split_sections(text, &mut errors);
    let mut g = Reader::new("global", global, &mut errors, true);
    let file_kind: Option<Kind> = g.parse("kind");
    let kind = match (kind, file_kind) {
        (Some(a), Some(b)) if a != b => {
            g.err(format!("command-line kind `{a}` differs from the file's `{b}`"));
            a
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            g.err("no experiment kind given".into());
            Kind::Simulate
        }
    };
    let beta: f64 = g.required("beta").unwrap_or(f64::NAN);
    let n_scale: u64 = if kind.uses_particles() {
        g.required("N").unwrap_or(1)
    } else {
        g.or("N", 1)
    };
    let t_end: f64 = if kind == Kind::Criterion {
        g.or("t_end", 0.0)
    } else {
        g.required("t_end").unwrap_or(f64::NAN)
    };
    let default_dim = if kind == Kind::Unbounded2d { 2 } else { 1 };
    let model = ModelConfig {
        beta,
        n_scale,
        dim: g.or("dim", default_dim),
        t_end,
        dt: g.parse("dt"),
        snapshot_dt: g.or("snapshot_dt", 0.0),
        particle_cap: g.or("particle_cap", DEFAULT_PARTICLE_CAP),
    };
    let initial_path: Option<String> = g.parse("initial");
    let replicas: usize = g.or("replicas", 1);
    let first_replica: u64 = g.or("first_replica", 0);
    let seed: u64 = g.or("seed", 0);
    let out_dir: PathBuf = g.or("out", PathBuf::from(format!("results/{kind}")));
    let workers: usize = g.or("workers", 1);
    g.finish();

    let initial_measure = match initial_path {
        None => FiniteMeasure::dirac(0.0, 1.0).expect("unit atom").to_string(),
        Some(p) => {
            let path = base.join(&p);
            match fs::read_to_string(&path) {
                Err(e) => {
                    errors.push(format!("initial measure file {}: {e}", path.display()));
                    String::new()
                }
                Ok(s) => match s.parse::<FiniteMeasure>() {
                    Ok(mu) => mu.to_string(),
                    Err(e) => {
                        errors.push(format!("initial measure file {}: {e}", path.display()));
                        String::new()
                    }
                },
            }
        }
    };

    // Sections for other kinds may share the file.
    let mut params = None;
    for k in Kind::ALL {
        let entries = sections.remove(k.name()).unwrap_or_default();
        let mut r = Reader::new(&format!("[{k}]"), entries, &mut errors, k == kind);
        let p = kind_params(k, &mut r, &model);
        r.finish();
        if k == kind {
            params = Some(p);
        }
    }

    let cfg = ExperimentConfig {
        kind,
        model,
        initial_measure,
        replicas,
        first_replica,
        seed,
        out_dir,
        workers,
        params: params.expect("selected kind parsed"),
    };
    if errors.is_empty() {
        validate(&cfg, &mut errors);
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { errors })
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path, kind: Option<Kind>) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        errors: vec![format!("cannot read {}: {e}", path.display())],
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base, kind)
}

//! Flat `key = value` configuration files.
//!
//! Lines are `key = value` pairs with dotted keys (`chem.alpha = 0`); `#`
//! starts a comment. A `preset = fig3-u0.1` line selects a preset as the base
//! and every other key overrides it, regardless of line order. Vector values
//! are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use colony_core::chemical::TaxisKind;
use colony_core::clusters::ClusterParams;
use colony_core::scenario::{aggregation_experiment, preset, ChemSettings, InitialData, SimConfig, PRESET_CELLS};
use colony_core::{DomainGrid, InteractionKernel, KernelProfile, Neighborhood, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub clusters: ClusterParams,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_preset(name: &str, cells: usize) -> Result<Self, ConfigError> {
        let sim = preset(name, cells).map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
        Ok(RunConfig { sim, clusters: ClusterParams::default(), out_dir: None })
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = self.sim.violations();
        let c = &self.clusters;
        if !(c.theta > 0.0 && c.theta <= 1.0) {
            v.push(format!("clusters.theta={} must lie in (0, 1]", c.theta));
        }
        if !(c.main_fraction >= 0.0 && c.main_fraction <= 1.0) {
            v.push(format!("clusters.main_fraction={} must lie in [0, 1]", c.main_fraction));
        }
        if let Some(r) = c.merge_radius {
            if !(r >= 0.0) {
                v.push(format!("clusters.merge_radius={r} must be nonnegative"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(v))
        }
    }

    /// Replaces the grid resolution, keeping the domain.
    pub fn with_cells(mut self, cells: usize) -> Result<Self, ConfigError> {
        let g = &self.sim.grid;
        let grid = if g.dim() == 1 {
            DomainGrid::new_1d(g.lower().x, g.upper().x, cells)
        } else {
            let (w, h) = (g.upper().x - g.lower().x, g.upper().y - g.lower().y);
            let ny = ((cells as f64) * h / w).round() as usize;
            DomainGrid::new_2d(g.lower(), g.upper(), [cells, ny.max(1)])
        }
        .map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
        self.sim.grid = grid;
        Ok(self)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.0.get(key).map_or(0, |e| e.line);
        ConfigError::Parse { line, key: key.to_string(), message: message.into() }
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.0.remove(key)
    }

    fn text(&mut self, key: &str) -> Option<(usize, String)> {
        self.take(key).map(|e| (e.line, e.value))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| ConfigError::Parse {
                line: e.line,
                key: key.to_string(),
                message: format!("cannot parse `{}`", e.value),
            }),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => parse_list(&e.value).map(Some).map_err(|m| ConfigError::Parse {
                line: e.line,
                key: key.to_string(),
                message: m,
            }),
        }
    }

    fn vector(&mut self, key: &str, dim: usize) -> Result<Option<Vec2>, ConfigError> {
        let line = self.0.get(key).map_or(0, |e| e.line);
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == dim => Ok(Some(if dim == 1 { Vec2::along_x(v[0]) } else { Vec2::new(v[0], v[1]) })),
            Some(v) => Err(ConfigError::Parse {
                line,
                key: key.to_string(),
                message: format!("expected {dim} components, got {}", v.len()),
            }),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("cannot parse number `{}`", p.trim())))
        .collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            key: content.to_string(),
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim().to_string();
        if map.contains_key(&key) {
            return Err(ConfigError::Parse { line, key, message: "duplicate key".into() });
        }
        map.insert(key, Entry { line, value: value.trim().to_string() });
    }
    let mut e = Entries(map);

    let cells_override: Option<usize> = e.parse("grid.cells")?;
    let mut cfg = match e.text("preset") {
        Some((line, name)) => RunConfig::from_preset(&name, PRESET_CELLS).map_err(|err| ConfigError::Parse {
            line,
            key: "preset".into(),
            message: err.to_string(),
        })?,
        None => RunConfig {
            sim: aggregation_experiment(0.3, 0.0, PRESET_CELLS).expect("default experiment is valid"),
            clusters: ClusterParams::default(),
            out_dir: None,
        },
    };
    let sim = &mut cfg.sim;

    // grid
    let dim: usize = e.parse("grid.dim")?.unwrap_or(sim.grid.dim());
    if dim != 1 && dim != 2 {
        return Err(e.err("grid.dim", "must be 1 or 2"));
    }
    let lower_line = e.0.get("grid.lower").map_or(0, |x| x.line);
    let lower = e.vector("grid.lower", dim)?;
    let upper = e.vector("grid.upper", dim)?;
    let cells_y: Option<usize> = e.parse("grid.cells_y")?;
    if dim != sim.grid.dim() || lower.is_some() || upper.is_some() || cells_override.is_some() || cells_y.is_some() {
        let old = &sim.grid;
        let lo = lower.unwrap_or(if dim == old.dim() { old.lower() } else { Vec2::ZERO });
        let hi = upper.unwrap_or(if dim == old.dim() { old.upper() } else { Vec2::new(1.0, 1.0) });
        let nx = cells_override.unwrap_or(old.nx());
        let grid = if dim == 1 {
            DomainGrid::new_1d(lo.x, hi.x, nx)
        } else {
            let ny = cells_y.unwrap_or_else(|| ((nx as f64) * (hi.y - lo.y) / (hi.x - lo.x)).round() as usize);
            DomainGrid::new_2d(lo, hi, [nx, ny])
        };
        sim.grid = grid.map_err(|err| ConfigError::Parse { line: lower_line, key: "grid".into(), message: err.to_string() })?;
    }

    if let Some(n) = e.parse("n")? {
        sim.n = n;
    }
    if let Some(u) = e.parse("u")? {
        sim.u = u;
    }
    if let Some(s) = e.parse("sigma")? {
        sim.sigma = s;
    }
    if let Some(s) = e.parse("seed")? {
        sim.seed = s;
    }
    if let Some(d) = e.vector("drift", dim)? {
        sim.drift = d;
    }

    // kernel
    let mut profile = sim.kernel.profile().clone();
    if let Some((line, name)) = e.text("kernel.profile") {
        profile = match name.as_str() {
            "aggregation" => KernelProfile::Aggregation,
            "repulsion" => KernelProfile::Repulsion,
            "zero" => KernelProfile::Zero,
            "polynomial" => KernelProfile::Polynomial(Vec::new()),
            other => {
                return Err(ConfigError::Parse { line, key: "kernel.profile".into(), message: format!("unknown profile `{other}`") })
            }
        };
    }
    if let Some(c) = e.list("kernel.coefficients")? {
        profile = KernelProfile::Polynomial(c);
    }
    let radius = e.parse("kernel.radius")?.unwrap_or(sim.kernel.radius());
    let mut neighborhood = sim.kernel.neighborhood();
    if let Some((line, name)) = e.text("kernel.neighborhood") {
        neighborhood = match name.as_str() {
            "ball" => Neighborhood::Ball,
            "right" => Neighborhood::Right,
            "left" => Neighborhood::Left,
            "taxis" => Neighborhood::TaxisAligned,
            other => {
                return Err(ConfigError::Parse {
                    line,
                    key: "kernel.neighborhood".into(),
                    message: format!("unknown neighborhood `{other}`"),
                })
            }
        };
    }
    let radius_line = e.0.get("kernel.radius").map_or(0, |x| x.line);
    sim.kernel = InteractionKernel::new(profile, radius, neighborhood)
        .map_err(|err| ConfigError::Parse { line: radius_line, key: "kernel".into(), message: err.to_string() })?;

    // chemistry
    let chem_on = e.parse::<bool>("chem.enabled")?.unwrap_or(sim.chem.is_some());
    let base = sim.chem.unwrap_or(ChemSettings { diffusion: 1.0, alpha: 0.0, gamma: 0.0, taxis: TaxisKind::None });
    let diffusion = e.parse("chem.diffusion")?.unwrap_or(base.diffusion);
    let alpha = e.parse("chem.alpha")?.unwrap_or(base.alpha);
    let gamma = e.parse("chem.gamma")?.unwrap_or(base.gamma);
    let (old_chi, old_r) = match base.taxis {
        TaxisKind::None => (1.0, 0.1),
        TaxisKind::Gradient { chi } => (chi, 0.1),
        TaxisKind::Nonlocal { chi, radius } => (chi, radius),
    };
    let chi = e.parse("chem.chi")?.unwrap_or(old_chi);
    let sense = e.parse("chem.radius")?.unwrap_or(old_r);
    let taxis = match e.text("chem.taxis") {
        None => match base.taxis {
            TaxisKind::None => TaxisKind::None,
            TaxisKind::Gradient { .. } => TaxisKind::Gradient { chi },
            TaxisKind::Nonlocal { .. } => TaxisKind::Nonlocal { chi, radius: sense },
        },
        Some((line, name)) => match name.as_str() {
            "none" => TaxisKind::None,
            "gradient" => TaxisKind::Gradient { chi },
            "nonlocal" => TaxisKind::Nonlocal { chi, radius: sense },
            other => {
                return Err(ConfigError::Parse { line, key: "chem.taxis".into(), message: format!("unknown taxis `{other}`") })
            }
        },
    };
    sim.chem = chem_on.then_some(ChemSettings { diffusion, alpha, gamma, taxis });

    // stepping
    if let Some(v) = e.parse("step.dt_max")? {
        sim.step.dt_max = v;
    }
    if let Some(v) = e.parse("step.cfl")? {
        sim.step.cfl = v;
    }
    if let Some(v) = e.parse("step.t_max")? {
        sim.step.t_max = v;
    }
    if let Some(v) = e.list("snapshots")? {
        sim.snapshots = v;
    }

    // initial data
    let kind = e.text("init");
    let lower = e.vector("init.lower", dim)?;
    let upper = e.vector("init.upper", dim)?;
    let center = e.vector("init.center", dim)?;
    let width: Option<f64> = e.parse("init.width")?;
    let (default_lo, default_hi, default_c, default_w) = match sim.init {
        InitialData::Lattice { lower, upper } => (lower, upper, (lower + upper) * 0.5, 0.1),
        InitialData::Point { center } => (center, center, center, 0.1),
        InitialData::Gaussian { center, width } => (center, center, center, width),
    };
    let kind_name = match &kind {
        Some((_, k)) => k.clone(),
        None => match sim.init {
            InitialData::Lattice { .. } => "lattice".into(),
            InitialData::Point { .. } => "point".into(),
            InitialData::Gaussian { .. } => "gaussian".into(),
        },
    };
    sim.init = match kind_name.as_str() {
        "lattice" => InitialData::Lattice { lower: lower.unwrap_or(default_lo), upper: upper.unwrap_or(default_hi) },
        "point" => InitialData::Point { center: center.unwrap_or(default_c) },
        "gaussian" => InitialData::Gaussian { center: center.unwrap_or(default_c), width: width.unwrap_or(default_w) },
        other => {
            return Err(ConfigError::Parse {
                line: kind.map_or(0, |k| k.0),
                key: "init".into(),
                message: format!("unknown initial data `{other}`"),
            })
        }
    };

    // clusters and output
    if let Some(v) = e.parse("clusters.theta")? {
        cfg.clusters.theta = v;
    }
    if let Some(v) = e.parse("clusters.main_fraction")? {
        cfg.clusters.main_fraction = v;
    }
    if let Some(v) = e.parse("clusters.merge_radius")? {
        cfg.clusters.merge_radius = Some(v);
    }
    if let Some((_, dir)) = e.text("output.dir") {
        cfg.out_dir = Some(PathBuf::from(dir));
    }

    if let Some((key, entry)) = e.0.iter().next() {
        return Err(ConfigError::Parse { line: entry.line, key: key.clone(), message: "unknown key".into() });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn vec_text(v: Vec2, dim: usize) -> String {
    if dim == 1 {
        format!("{:?}", v.x)
    } else {
        format!("{:?},{:?}", v.x, v.y)
    }
}

/// Writes every key explicitly, so that parsing the result reproduces the
/// configuration exactly.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let s = &cfg.sim;
    let d = s.grid.dim();
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("grid.dim", d.to_string());
    kv("grid.lower", vec_text(s.grid.lower(), d));
    kv("grid.upper", vec_text(s.grid.upper(), d));
    kv("grid.cells", s.grid.nx().to_string());
    if d == 2 {
        kv("grid.cells_y", s.grid.ny().to_string());
    }
    kv("n", s.n.to_string());
    kv("u", format!("{:?}", s.u));
    kv("sigma", format!("{:?}", s.sigma));
    kv("seed", s.seed.to_string());
    kv("drift", vec_text(s.drift, d));
    match s.kernel.profile() {
        KernelProfile::Aggregation => kv("kernel.profile", "aggregation".into()),
        KernelProfile::Repulsion => kv("kernel.profile", "repulsion".into()),
        KernelProfile::Zero => kv("kernel.profile", "zero".into()),
        KernelProfile::Polynomial(c) => {
            kv("kernel.profile", "polynomial".into());
            kv("kernel.coefficients", join(c));
        }
    }
    kv("kernel.radius", format!("{:?}", s.kernel.radius()));
    let nb = match s.kernel.neighborhood() {
        Neighborhood::Ball => "ball",
        Neighborhood::Right => "right",
        Neighborhood::Left => "left",
        Neighborhood::TaxisAligned => "taxis",
    };
    kv("kernel.neighborhood", nb.into());
    kv("chem.enabled", s.chem.is_some().to_string());
    if let Some(c) = &s.chem {
        kv("chem.diffusion", format!("{:?}", c.diffusion));
        kv("chem.alpha", format!("{:?}", c.alpha));
        kv("chem.gamma", format!("{:?}", c.gamma));
        match c.taxis {
            TaxisKind::None => kv("chem.taxis", "none".into()),
            TaxisKind::Gradient { chi } => {
                kv("chem.taxis", "gradient".into());
                kv("chem.chi", format!("{chi:?}"));
            }
            TaxisKind::Nonlocal { chi, radius } => {
                kv("chem.taxis", "nonlocal".into());
                kv("chem.chi", format!("{chi:?}"));
                kv("chem.radius", format!("{radius:?}"));
            }
        }
    }
    kv("step.dt_max", format!("{:?}", s.step.dt_max));
    kv("step.cfl", format!("{:?}", s.step.cfl));
    kv("step.t_max", format!("{:?}", s.step.t_max));
    kv("snapshots", join(&s.snapshots));
    match s.init {
        InitialData::Lattice { lower, upper } => {
            kv("init", "lattice".into());
            kv("init.lower", vec_text(lower, d));
            kv("init.upper", vec_text(upper, d));
        }
        InitialData::Point { center } => {
            kv("init", "point".into());
            kv("init.center", vec_text(center, d));
        }
        InitialData::Gaussian { center, width } => {
            kv("init", "gaussian".into());
            kv("init.center", vec_text(center, d));
            kv("init.width", format!("{width:?}"));
        }
    }
    kv("clusters.theta", format!("{:?}", cfg.clusters.theta));
    kv("clusters.main_fraction", format!("{:?}", cfg.clusters.main_fraction));
    if let Some(r) = cfg.clusters.merge_radius {
        kv("clusters.merge_radius", format!("{r:?}"));
    }
    if let Some(dir) = &cfg.out_dir {
        kv("output.dir", dir.display().to_string());
    }
    out
}

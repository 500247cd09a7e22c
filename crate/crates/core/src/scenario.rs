//! Simulation settings, initial data and the aggregation presets.
//!
//! The presets reproduce the two-dimensional aggregation experiments: 25 cells
//! on a 5x5 lattice in `[1, 3]^2` inside `[0, 4]^2`, a uniform density
//! `1/4` on the same square, kernel `k(z) = z` on the ball of radius `R`
//! (`0.3` for the `fig3` family, `0.6` for `fig4`), and final time 20.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::chemical::{ChemicalField, TaxisKind};
use crate::grid::{DomainGrid, Region};
use crate::interaction::{InteractionKernel, KernelProfile};
use crate::math::{exp, sqrt, Vec2};
use crate::measure::HybridMeasure;
use crate::particle_mc::NormalStream;
use crate::{Error, Result};

/// Default grid resolution of the presets.
pub const PRESET_CELLS: usize = 200;
/// Snapshot times of the presets.
pub const PRESET_SNAPSHOTS: [f64; 6] = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_max: f64,
    pub cfl: f64,
    pub t_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { dt_max: 0.05, cfl: 0.5, t_max: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemSettings {
    pub diffusion: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub taxis: TaxisKind,
}

/// How the atoms and the density are laid out at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// Atoms on a regular lattice spanning the closed box, density uniform on
    /// the box. In two dimensions `N` must be a perfect square.
    Lattice { lower: Vec2, upper: Vec2 },
    /// All atoms at `center`, density concentrated in the cell containing it.
    Point { center: Vec2 },
    /// Gaussian density; atoms sampled from it with the configured seed.
    Gaussian { center: Vec2, width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: DomainGrid,
    pub n: usize,
    pub u: f64,
    pub kernel: InteractionKernel,
    pub chem: Option<ChemSettings>,
    /// Constant drift added to the taxis field.
    pub drift: Vec2,
    /// Random motility coefficient of the density (`sigma Laplacian rho`).
    pub sigma: f64,
    pub step: StepControl,
    pub snapshots: Vec<f64>,
    pub seed: u64,
    pub init: InitialData,
}

impl SimConfig {
    /// Lists every violated invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.u) {
            out.push(format!("u={} must lie in [0, 1]", self.u));
        }
        if !(self.kernel.radius() > 0.0) {
            out.push(format!("R={} must be positive", self.kernel.radius()));
        }
        if !(self.step.t_max > 0.0) {
            out.push(format!("T_max={} must be positive", self.step.t_max));
        }
        if self.n == 0 {
            out.push("N must be at least 1".into());
        }
        if !(self.step.dt_max > 0.0) {
            out.push(format!("dt_max={} must be positive", self.step.dt_max));
        }
        if !(self.step.cfl > 0.0 && self.step.cfl <= 1.0) {
            out.push(format!("cfl={} must lie in (0, 1]", self.step.cfl));
        }
        if !(self.sigma >= 0.0) {
            out.push(format!("sigma={} must be nonnegative", self.sigma));
        }
        if let Err(e) = self.kernel.check_dimension(self.grid.dim()) {
            out.push(format!("{e}"));
        }
        if let InitialData::Lattice { .. } = self.init {
            if self.grid.dim() == 2 {
                let side = integer_sqrt(self.n);
                if side * side != self.n {
                    out.push(format!("lattice initial data needs a square N, got {}", self.n));
                }
            }
        }
        if let InitialData::Gaussian { width, .. } = self.init {
            if !(width > 0.0) {
                out.push(format!("gaussian width {width} must be positive"));
            }
        }
        if self.snapshots.iter().any(|t| *t < 0.0 || *t > self.step.t_max) {
            out.push("snapshot times must lie in [0, T_max]".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }

    pub fn initial_measure(&self) -> Result<HybridMeasure> {
        self.validate()?;
        let g = &self.grid;
        let (atoms, density) = match self.init {
            InitialData::Lattice { lower, upper } => {
                let atoms = if g.dim() == 1 {
                    line_atoms(self.n, lower.x, upper.x)
                } else {
                    lattice_atoms(integer_sqrt(self.n), lower, upper)
                };
                (atoms, indicator_density(g, lower, upper))
            }
            InitialData::Point { center } => {
                let (i, j) = g
                    .locate(center)
                    .ok_or_else(|| Error::InvalidConfig(format!("initial point {center:?} outside the domain")))?;
                let mut rho = vec![0.0; g.len()];
                rho[g.index(i, j)] = 1.0 / g.cell_volume();
                (vec![center; self.n], rho)
            }
            InitialData::Gaussian { center, width } => {
                let rho = gaussian_density(g, center, width);
                let mut stream = NormalStream::new(self.seed, u64::MAX, 0);
                let atoms = (0..self.n)
                    .map(|_| {
                        let xi = stream.next_pair();
                        let p = if g.dim() == 1 {
                            center + Vec2::along_x(xi.x * width)
                        } else {
                            center + xi * width
                        };
                        g.clamp(p)
                    })
                    .collect();
                (atoms, rho)
            }
        };
        HybridMeasure::from_parts(g.clone(), atoms, density, self.u, self.n)?.normalized()
    }

    pub fn initial_chemical(&self) -> Result<Option<ChemicalField>> {
        match self.chem {
            None => Ok(None),
            Some(s) => ChemicalField::new(
                self.grid.clone(),
                vec![0.0; self.grid.len()],
                s.diffusion,
                s.alpha,
                s.gamma,
                s.taxis,
            )
            .map(Some),
        }
    }
}

fn integer_sqrt(n: usize) -> usize {
    let mut s = sqrt(n as f64) as usize;
    while s * s > n {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    s
}

/// `side x side` atoms on the regular lattice spanning `[lower, upper]`.
pub fn lattice_atoms(side: usize, lower: Vec2, upper: Vec2) -> Vec<Vec2> {
    let step = |lo: f64, hi: f64| if side > 1 { (hi - lo) / (side - 1) as f64 } else { 0.0 };
    let (sx, sy) = (step(lower.x, upper.x), step(lower.y, upper.y));
    let mut atoms = Vec::with_capacity(side * side);
    for b in 0..side {
        for a in 0..side {
            atoms.push(Vec2::new(lower.x + a as f64 * sx, lower.y + b as f64 * sy));
        }
    }
    atoms
}

/// `n` evenly spaced atoms on `[lo, hi]` (the midpoint when `n == 1`).
pub fn line_atoms(n: usize, lo: f64, hi: f64) -> Vec<Vec2> {
    if n == 1 {
        return vec![Vec2::along_x(0.5 * (lo + hi))];
    }
    (0..n)
        .map(|k| Vec2::along_x(lo + k as f64 * (hi - lo) / (n - 1) as f64))
        .collect()
}

/// Normalized indicator of the box `[lower, upper]` as cell averages.
pub fn indicator_density(grid: &DomainGrid, lower: Vec2, upper: Vec2) -> Vec<f64> {
    let region = Region { lower, upper };
    let vol = grid.cell_volume();
    let area = if grid.dim() == 1 {
        upper.x - lower.x
    } else {
        (upper.x - lower.x) * (upper.y - lower.y)
    };
    let mut rho = vec![0.0; grid.len()];
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = region.overlap_with_cell(grid, i, j);
            if w > 0.0 {
                rho[grid.index(i, j)] = w / vol / area;
            }
        }
    }
    rho
}

/// Normalized Gaussian bump sampled at cell centers.
pub fn gaussian_density(grid: &DomainGrid, center: Vec2, width: f64) -> Vec<f64> {
    let mut rho: Vec<f64> = grid
        .centers()
        .into_iter()
        .map(|p| exp(-(p - center).norm_sq() / (2.0 * width * width)))
        .collect();
    let total = grid.integrate(&rho);
    rho.iter_mut().for_each(|v| *v /= total);
    rho
}

/// Aggregation experiment with sensing radius `radius` and mixing weight `u`.
pub fn aggregation_experiment(radius: f64, u: f64, cells: usize) -> Result<SimConfig> {
    Ok(SimConfig {
        grid: DomainGrid::square(0.0, 4.0, cells)?,
        n: 25,
        u,
        kernel: InteractionKernel::new(KernelProfile::Aggregation, radius, crate::Neighborhood::Ball)?,
        chem: None,
        drift: Vec2::ZERO,
        sigma: 0.0,
        step: StepControl { dt_max: 0.05, cfl: 0.5, t_max: 20.0 },
        snapshots: PRESET_SNAPSHOTS.to_vec(),
        seed: 0,
        init: InitialData::Lattice { lower: Vec2::new(1.0, 1.0), upper: Vec2::new(3.0, 3.0) },
    })
}

/// Expands `fig3-u<u>` (R = 0.3) and `fig4-u<u>` (R = 0.6).
pub fn preset(name: &str, cells: usize) -> Result<SimConfig> {
    let (radius, rest) = if let Some(rest) = name.strip_prefix("fig3-u") {
        (0.3, rest)
    } else if let Some(rest) = name.strip_prefix("fig4-u") {
        (0.6, rest)
    } else {
        return Err(Error::InvalidConfig(format!("unknown preset `{name}`")));
    };
    let u: f64 = rest
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("preset `{name}`: cannot parse u from `{rest}`")))?;
    let cfg = aggregation_experiment(radius, u, cells)?;
    cfg.validate()?;
    Ok(cfg)
}

//! Chemical concentration `c` obeying
//!
//! ```text
//! dc/dt = div(D grad c) + alpha N mu - gamma c
//! ```
//!
//! on the simulation box with no-flux boundaries, and the taxis operators that
//! turn `c` into a drift velocity.
//!
//! Time stepping is backward Euler for diffusion and decay with an explicit
//! source, so the update is unconditionally stable and keeps `c >= 0`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::DomainGrid;
use crate::linalg::ImplicitDiffusion;
use crate::math::{cos, sin, Vec2};
use crate::measure::HybridMeasure;
use crate::par::map_indices;
use crate::{Error, Result};

/// Relative residual for the implicit solve. Tighter than needed for
/// stability so that mass conservation holds to round-off.
const SOLVE_TOL: f64 = 1e-13;

/// Number of sensing directions on the circle for the two-dimensional
/// nonlocal gradient.
pub const NONLOCAL_DIRECTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaxisKind {
    None,
    /// `chi * grad c`.
    Gradient { chi: f64 },
    /// `chi` times the gradient sensed on a sphere of radius `radius`.
    Nonlocal { chi: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalField {
    grid: DomainGrid,
    concentration: Vec<f64>,
    diffusion: [f64; 2],
    alpha: f64,
    gamma: f64,
    taxis: TaxisKind,
}

impl ChemicalField {
    /// Isotropic diffusion `D = diffusion * I`.
    pub fn new(
        grid: DomainGrid,
        concentration: Vec<f64>,
        diffusion: f64,
        alpha: f64,
        gamma: f64,
        taxis: TaxisKind,
    ) -> Result<Self> {
        Self::with_diagonal_diffusion(grid, concentration, [diffusion, diffusion], alpha, gamma, taxis)
    }

    pub fn with_diagonal_diffusion(
        grid: DomainGrid,
        concentration: Vec<f64>,
        diffusion: [f64; 2],
        alpha: f64,
        gamma: f64,
        taxis: TaxisKind,
    ) -> Result<Self> {
        if concentration.len() != grid.len() {
            return Err(Error::InvalidConfig(format!(
                "concentration has {} values for {} cells",
                concentration.len(),
                grid.len()
            )));
        }
        if concentration.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidConfig("concentration must be nonnegative".into()));
        }
        if diffusion.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidConfig(format!("diffusion {diffusion:?} must be nonnegative")));
        }
        if !(alpha >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::InvalidConfig("alpha and gamma must be nonnegative".into()));
        }
        if let TaxisKind::Nonlocal { radius, .. } = taxis {
            if !(radius > 0.0) {
                return Err(Error::InvalidConfig("nonlocal sensing radius must be positive".into()));
            }
        }
        Ok(ChemicalField { grid, concentration, diffusion, alpha, gamma, taxis })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn taxis_kind(&self) -> TaxisKind {
        self.taxis
    }

    pub fn total(&self) -> f64 {
        self.grid.integrate(&self.concentration)
    }

    /// Source density `alpha N mu` on the grid. Atoms deposit `(1 - u) alpha`
    /// each by linear/bilinear splatting; the continuous part adds
    /// `u alpha N rho`.
    pub fn source(&self, m: &HybridMeasure) -> Vec<f64> {
        let mut s = vec![0.0; self.grid.len()];
        if self.alpha == 0.0 {
            return s;
        }
        let u = m.u();
        if u < 1.0 {
            let per_atom = (1.0 - u) * self.alpha;
            for &a in m.atoms() {
                self.grid.splat(a, per_atom, &mut s);
            }
        }
        if u > 0.0 {
            let w = u * self.alpha * m.n() as f64;
            for (si, rho) in s.iter_mut().zip(m.density()) {
                *si += w * rho;
            }
        }
        s
    }

    /// Advances the concentration by `dt`.
    pub fn step(&mut self, m: &HybridMeasure, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::UnstableStep(format!("time step {dt} must be positive and finite")));
        }
        let source = self.source(m);
        let b: Vec<f64> = self
            .concentration
            .iter()
            .zip(&source)
            .map(|(c, s)| c + dt * s)
            .collect();
        let op = ImplicitDiffusion {
            grid: &self.grid,
            diag: 1.0 + self.gamma * dt,
            coef: [dt * self.diffusion[0], dt * self.diffusion[1]],
        };
        let mut next = self.concentration.clone();
        op.solve(&b, &mut next, SOLVE_TOL)?;
        for v in next.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.concentration = next;
        Ok(())
    }

    /// `grad c` with centered differences inside and one-sided differences on
    /// the boundary cells.
    pub fn gradient_field(&self) -> Vec<Vec2> {
        let g = &self.grid;
        let c = &self.concentration;
        let dx = g.dx();
        let diff = |lo: usize, mid: usize, hi: usize, at_lo: bool, at_hi: bool| -> f64 {
            match (at_lo, at_hi) {
                (true, true) => 0.0,
                (true, false) => (c[hi] - c[mid]) / dx,
                (false, true) => (c[mid] - c[lo]) / dx,
                (false, false) => (c[hi] - c[lo]) / (2.0 * dx),
            }
        };
        (0..g.len())
            .map(|k| {
                let (i, j) = g.coords(k);
                let gx = diff(k.wrapping_sub(1), k, k + 1, i == 0, i + 1 == g.nx());
                let gy = if g.dim() == 1 {
                    0.0
                } else {
                    diff(k.wrapping_sub(g.nx()), k, k + g.nx(), j == 0, j + 1 == g.ny())
                };
                Vec2::new(gx, gy)
            })
            .collect()
    }

    /// Taxis drift `T[c]` at every cell center.
    pub fn taxis_field(&self) -> Vec<Vec2> {
        match self.taxis {
            TaxisKind::None => vec![Vec2::ZERO; self.grid.len()],
            TaxisKind::Gradient { chi } => self.gradient_field().into_iter().map(|v| v * chi).collect(),
            TaxisKind::Nonlocal { chi, radius } => {
                let g = &self.grid;
                map_indices(g.len(), |k| {
                    let x = g.center_of(k);
                    let sample = |p: Vec2| g.interpolate(&self.concentration, g.clamp(p));
                    nonlocal_gradient_of(sample, x, radius, g.dim()) * chi
                })
            }
        }
    }

    /// Nonlocal gradient of the grid concentration at `x`, sensed at distance
    /// `r`. Fails if the sensing sphere leaves the grid.
    pub fn nonlocal_gradient(&self, x: Vec2, r: f64) -> Result<Vec2> {
        let g = &self.grid;
        let lo = g.lower();
        let hi = g.upper();
        let inside_x = x.x - r >= lo.x && x.x + r <= hi.x;
        let inside_y = g.dim() == 1 || (x.y - r >= lo.y && x.y + r <= hi.y);
        if !(r > 0.0) || !inside_x || !inside_y {
            return Err(Error::OutOfDomain { x: x.x, y: x.y });
        }
        Ok(nonlocal_gradient_of(|p| g.interpolate(&self.concentration, p), x, r, g.dim()))
    }
}

/// Spherical-average gradient
/// `(d / (r |S|)) * integral over the unit sphere S of sigma c(x + r sigma)`.
///
/// In one dimension the sphere is `{-1, +1}`; in two dimensions the circle is
/// sampled at [`NONLOCAL_DIRECTIONS`] equally spaced directions.
pub fn nonlocal_gradient_of(c: impl Fn(Vec2) -> f64, x: Vec2, r: f64, dim: usize) -> Vec2 {
    if dim == 1 {
        let g = (c(x + Vec2::along_x(r)) - c(x - Vec2::along_x(r))) / (2.0 * r);
        return Vec2::along_x(g);
    }
    let q = NONLOCAL_DIRECTIONS;
    let mut acc = Vec2::ZERO;
    for k in 0..q {
        let theta = 2.0 * core::f64::consts::PI * k as f64 / q as f64;
        let sigma = Vec2::new(cos(theta), sin(theta));
        acc += sigma * c(x + sigma * r);
    }
    acc * (2.0 / (r * q as f64))
}

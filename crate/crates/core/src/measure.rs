//! Hybrid probability measures
//! `mu = (1 - u) (1/N) sum_h delta_{x_h} + u rho dx`
//! and the associated mass measure `m = N mu`.
//!
//! Queries never expose atom identity: the atom list is an unordered multiset
//! as far as every function here is concerned.

use alloc::format;
use alloc::vec::Vec;

use crate::grid::{DomainGrid, Region};
use crate::math::Vec2;
use crate::{Error, Result};

/// Tolerance on the normalization of valid measures.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridMeasure {
    grid: DomainGrid,
    atoms: Vec<Vec2>,
    density: Vec<f64>,
    u: f64,
    n: usize,
}

impl HybridMeasure {
    /// Builds a measure and checks every invariant: `N` atoms, a nonnegative
    /// density matching the grid, `u` in `[0, 1]` and unit total probability.
    pub fn new(grid: DomainGrid, atoms: Vec<Vec2>, density: Vec<f64>, u: f64) -> Result<Self> {
        let n = atoms.len();
        let m = Self::from_parts(grid, atoms, density, u, n)?;
        if m.u > 0.0 {
            let integral = m.density_integral();
            if (integral - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "density integrates to {integral}, expected 1"
                )));
            }
        }
        Ok(m)
    }

    /// Like [`HybridMeasure::new`] but without the normalization check, and
    /// with an explicit `N` that must still equal the atom count.
    pub fn from_parts(
        grid: DomainGrid,
        atoms: Vec<Vec2>,
        density: Vec<f64>,
        u: f64,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMeasure("N must be positive".into()));
        }
        if atoms.len() != n {
            return Err(Error::InvalidMeasure(format!(
                "atom count {} differs from N={n}",
                atoms.len()
            )));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidMeasure(format!("u={u} outside [0, 1]")));
        }
        if density.len() != grid.len() {
            return Err(Error::InvalidMeasure(format!(
                "density has {} values for a grid of {} cells",
                density.len(),
                grid.len()
            )));
        }
        if let Some(bad) = density.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!("density value {bad} is not a finite nonnegative number")));
        }
        if let Some(bad) = atoms.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidMeasure(format!("atom {bad:?} is not finite")));
        }
        Ok(HybridMeasure { grid, atoms, density, u, n })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn atoms(&self) -> &[Vec2] {
        &self.atoms
    }

    pub fn atoms_mut(&mut self) -> &mut [Vec2] {
        &mut self.atoms
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn density_mut(&mut self) -> &mut [f64] {
        &mut self.density
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    /// Total number of cells `N` represented by the measure.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn density_integral(&self) -> f64 {
        self.grid.integrate(&self.density)
    }

    /// `(1 - u) |atoms| / N + u * integral(rho)`.
    pub fn total_probability(&self) -> f64 {
        (1.0 - self.u) * self.atoms.len() as f64 / self.n as f64 + self.u * self.density_integral()
    }

    /// Expected number of cells in `region`:
    /// `(1 - u) card(E ∩ atoms) + u N integral_E rho`, with exact clipping of
    /// grid cells against the box.
    pub fn mass(&self, region: &Region) -> f64 {
        let dim = self.grid.dim();
        let count = self.atoms.iter().filter(|a| region.contains(**a, dim)).count() as f64;
        let mut integral = 0.0;
        if self.u > 0.0 {
            for j in 0..self.grid.ny() {
                for i in 0..self.grid.nx() {
                    let value = self.density[self.grid.index(i, j)];
                    if value != 0.0 {
                        let w = region.overlap_with_cell(&self.grid, i, j);
                        if w > 0.0 {
                            integral += w * value;
                        }
                    }
                }
            }
        }
        (1.0 - self.u) * count + self.u * self.n as f64 * integral
    }

    /// Rescales the density to unit integral. Leaves atomic measures untouched.
    pub fn normalize_density(&mut self) -> Result<()> {
        if self.u == 0.0 {
            return Ok(());
        }
        let integral = self.density_integral();
        if integral <= 0.0 {
            return Err(Error::ZeroDensity);
        }
        if integral != 1.0 {
            let scale = 1.0 / integral;
            self.density.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(())
    }

    /// Owned variant of [`HybridMeasure::normalize_density`].
    pub fn normalized(mut self) -> Result<Self> {
        self.normalize_density()?;
        Ok(self)
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }
}

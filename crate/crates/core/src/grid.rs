//! Uniform Cartesian grids in one or two dimensions.
//!
//! Values live at cell centers and represent cell averages. Storage order is
//! `index = i + nx * j`, with `i` along x and `j` along y.

use alloc::format;
use alloc::vec::Vec;

use crate::math::{floor, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    lower: Vec2,
    upper: Vec2,
    cells: [usize; 2],
    dim: usize,
    dx: f64,
}

impl DomainGrid {
    /// Two-dimensional grid with square cells.
    pub fn new_2d(lower: Vec2, upper: Vec2, cells: [usize; 2]) -> Result<Self> {
        if cells[0] == 0 || cells[1] == 0 {
            return Err(Error::InvalidGrid("cell counts must be positive".into()));
        }
        if !(upper.x > lower.x && upper.y > lower.y) {
            return Err(Error::InvalidGrid(format!(
                "upper corner {upper:?} must exceed lower corner {lower:?}"
            )));
        }
        let dx = (upper.x - lower.x) / cells[0] as f64;
        let dy = (upper.y - lower.y) / cells[1] as f64;
        if ((dx - dy) / dx).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "cells must be square, got dx={dx} dy={dy}"
            )));
        }
        Ok(DomainGrid { lower, upper, cells, dim: 2, dx })
    }

    /// Square domain `[lo, hi]^2` with `n` cells per axis.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new_2d(Vec2::new(lo, lo), Vec2::new(hi, hi), [n, n])
    }

    /// One-dimensional grid on `[lo, hi]`. The y extent is a single cell of
    /// width `dx` and plays no role in integrals.
    pub fn new_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("cell count must be positive".into()));
        }
        if !(hi > lo) {
            return Err(Error::InvalidGrid(format!("upper {hi} must exceed lower {lo}")));
        }
        let dx = (hi - lo) / n as f64;
        Ok(DomainGrid {
            lower: Vec2::new(lo, -0.5 * dx),
            upper: Vec2::new(hi, 0.5 * dx),
            cells: [n, 1],
            dim: 1,
            dx,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn lower(&self) -> Vec2 {
        self.lower
    }

    pub fn upper(&self) -> Vec2 {
        self.upper
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lebesgue measure of one cell, `dx^d`.
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.dx
        } else {
            self.dx * self.dx
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        let x = self.lower.x + (i as f64 + 0.5) * self.dx;
        let y = if self.dim == 1 {
            0.0
        } else {
            self.lower.y + (j as f64 + 0.5) * self.dx
        };
        Vec2::new(x, y)
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        self.center(i, j)
    }

    pub fn centers(&self) -> Vec<Vec2> {
        (0..self.len()).map(|k| self.center_of(k)).collect()
    }

    /// Whether `p` lies in the closed domain (x only in one dimension).
    pub fn contains(&self, p: Vec2) -> bool {
        let in_x = p.x >= self.lower.x && p.x <= self.upper.x;
        if self.dim == 1 {
            in_x
        } else {
            in_x && p.y >= self.lower.y && p.y <= self.upper.y
        }
    }

    /// Projects `p` onto the closed domain.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        let x = p.x.clamp(self.lower.x, self.upper.x);
        let y = if self.dim == 1 {
            0.0
        } else {
            p.y.clamp(self.lower.y, self.upper.y)
        };
        Vec2::new(x, y)
    }

    /// Cell containing `p`, with points on the upper boundary assigned to the
    /// last cell. `None` outside the domain.
    pub fn locate(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i = (floor((p.x - self.lower.x) / self.dx) as usize).min(self.cells[0] - 1);
        let j = if self.dim == 1 {
            0
        } else {
            (floor((p.y - self.lower.y) / self.dx) as usize).min(self.cells[1] - 1)
        };
        Some((i, j))
    }

    /// Quadrature of cell averages over the domain.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Fractional cell coordinate along one axis, measured from the first center.
    fn center_coordinate(&self, p: f64, axis: usize) -> f64 {
        let lo = if axis == 0 { self.lower.x } else { self.lower.y };
        (p - lo) / self.dx - 0.5
    }

    /// Linear (d=1) or bilinear (d=2) weights of the cell centers surrounding
    /// `p`. Points beyond the outermost centers are clamped to them.
    pub fn interpolation_stencil(&self, p: Vec2) -> [(usize, f64); 4] {
        let (i0, i1, wx) = Self::axis_weights(self.center_coordinate(p.x, 0), self.cells[0]);
        if self.dim == 1 {
            return [
                (self.index(i0, 0), 1.0 - wx),
                (self.index(i1, 0), wx),
                (0, 0.0),
                (0, 0.0),
            ];
        }
        let (j0, j1, wy) = Self::axis_weights(self.center_coordinate(p.y, 1), self.cells[1]);
        [
            (self.index(i0, j0), (1.0 - wx) * (1.0 - wy)),
            (self.index(i1, j0), wx * (1.0 - wy)),
            (self.index(i0, j1), (1.0 - wx) * wy),
            (self.index(i1, j1), wx * wy),
        ]
    }

    fn axis_weights(s: f64, n: usize) -> (usize, usize, f64) {
        if n == 1 || s <= 0.0 {
            return (0, 0, 0.0);
        }
        let last = (n - 1) as f64;
        if s >= last {
            return (n - 1, n - 1, 0.0);
        }
        let i0 = floor(s) as usize;
        (i0, i0 + 1, s - i0 as f64)
    }

    /// Interpolates cell-center values at `p`.
    pub fn interpolate(&self, values: &[f64], p: Vec2) -> f64 {
        self.interpolation_stencil(p)
            .iter()
            .map(|&(k, w)| if w == 0.0 { 0.0 } else { w * values[k] })
            .sum()
    }

    /// Deposits `mass` at `p` onto the surrounding cells as a density (value per
    /// unit volume), using the interpolation weights. The deposited integral is
    /// exactly `mass` up to rounding.
    pub fn splat(&self, p: Vec2, mass: f64, out: &mut [f64]) {
        let scale = mass / self.cell_volume();
        for (k, w) in self.interpolation_stencil(p) {
            if w != 0.0 {
                out[k] += w * scale;
            }
        }
    }
}

/// Axis-aligned half-open box `[lower, upper)` used for mass queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lower: Vec2,
    pub upper: Vec2,
}

impl Region {
    pub fn new(lower: Vec2, upper: Vec2) -> Result<Self> {
        if upper.x < lower.x || upper.y < lower.y {
            return Err(Error::InvalidGrid(format!(
                "region upper {upper:?} below lower {lower:?}"
            )));
        }
        Ok(Region { lower, upper })
    }

    /// The whole grid domain. The upper corner is nudged outward so that atoms
    /// clamped onto the upper boundary still count as inside.
    pub fn of_grid(grid: &DomainGrid) -> Self {
        let pad = 1e-9 * grid.dx();
        Region {
            lower: grid.lower(),
            upper: grid.upper() + Vec2::new(pad, pad),
        }
    }

    /// Half-open membership test, `lower <= p < upper` (x only when `dim == 1`).
    pub fn contains(&self, p: Vec2, dim: usize) -> bool {
        let in_x = p.x >= self.lower.x && p.x < self.upper.x;
        if dim == 1 {
            in_x
        } else {
            in_x && p.y >= self.lower.y && p.y < self.upper.y
        }
    }

    /// Volume of the intersection of this region with cell `(i, j)`.
    pub fn overlap_with_cell(&self, grid: &DomainGrid, i: usize, j: usize) -> f64 {
        let dx = grid.dx();
        let x0 = grid.lower().x + i as f64 * dx;
        let wx = overlap(self.lower.x, self.upper.x, x0, x0 + dx);
        if grid.dim() == 1 {
            return wx;
        }
        let y0 = grid.lower().y + j as f64 * dx;
        wx * overlap(self.lower.y, self.upper.y, y0, y0 + dx)
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(DomainGrid::square(1.0, 1.0, 10).is_err());
        assert!(DomainGrid::square(0.0, 1.0, 0).is_err());
        assert!(DomainGrid::new_2d(Vec2::ZERO, Vec2::new(2.0, 1.0), [10, 10]).is_err());
        assert!(DomainGrid::new_1d(0.0, -1.0, 4).is_err());
    }

    #[test]
    fn centers_and_locate_agree() {
        let g = DomainGrid::square(0.0, 4.0, 200).unwrap();
        assert!((g.dx() - 0.02).abs() < 1e-15);
        for &(i, j) in &[(0, 0), (17, 113), (199, 199)] {
            assert_eq!(g.locate(g.center(i, j)), Some((i, j)));
        }
        assert_eq!(g.locate(Vec2::new(4.0, 4.0)), Some((199, 199)));
        assert_eq!(g.locate(Vec2::new(4.1, 1.0)), None);
    }

    #[test]
    fn interpolation_is_exact_on_linear_fields() {
        let g = DomainGrid::square(-1.0, 1.0, 40).unwrap();
        let f = |p: Vec2| 0.3 + 2.0 * p.x - 1.5 * p.y;
        let values: Vec<f64> = g.centers().into_iter().map(f).collect();
        for p in [Vec2::new(0.013, -0.42), Vec2::new(0.5, 0.5), Vec2::new(-0.9, 0.91)] {
            assert!((g.interpolate(&values, p) - f(p)).abs() < 1e-13);
        }
    }

    #[test]
    fn splat_conserves_mass_near_corners() {
        let g = DomainGrid::square(0.0, 1.0, 10).unwrap();
        let mut out = alloc::vec![0.0; g.len()];
        g.splat(Vec2::new(0.01, 0.99), 2.5, &mut out);
        g.splat(Vec2::new(0.37, 0.52), 1.0, &mut out);
        assert!((g.integrate(&out) - 3.5).abs() < 1e-14);
    }

    #[test]
    fn region_overlap_clips_partial_cells() {
        let g = DomainGrid::square(0.0, 1.0, 4).unwrap();
        let r = Region::new(Vec2::new(0.1, 0.0), Vec2::new(0.3, 0.25)).unwrap();
        assert!((r.overlap_with_cell(&g, 0, 0) - 0.15 * 0.25).abs() < 1e-15);
        assert!((r.overlap_with_cell(&g, 1, 0) - 0.05 * 0.25).abs() < 1e-15);
        assert_eq!(r.overlap_with_cell(&g, 2, 0), 0.0);
    }
}

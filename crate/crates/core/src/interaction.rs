//! Interaction kernels `K(x, y) = k(y - x)` restricted to a sensing
//! neighborhood, and the nonlocal velocity
//!
//! ```text
//! v(x) = T(x) + (1 - u) sum_h K(x, x_h) + u N integral K(x, y) rho(y) dy
//! ```
//!
//! The integral is a midpoint rule over the grid cells whose centers fall in
//! the sensing neighborhood of `x`; cells are not clipped against the boundary
//! of the neighborhood.

use alloc::format;
use alloc::vec::Vec;

use crate::grid::DomainGrid;
use crate::math::{ceil, Vec2};
use crate::measure::HybridMeasure;
use crate::par::map_indices;
use crate::{Error, Result};

/// Relative slack on the support radius. Cells whose centers sit on the
/// sensing sphere (up to rounding) belong to the closed neighborhood.
const SUPPORT_SLACK: f64 = 1e-9;

/// Shape of `k` inside its support.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelProfile {
    /// `k(z) = z`, attraction towards populated areas.
    Aggregation,
    /// `k(z) = -z`.
    Repulsion,
    /// One-dimensional `k(z) = sum_n c_n z^n` acting along x.
    Polynomial(Vec<f64>),
    /// `k == 0`.
    Zero,
}

impl KernelProfile {
    pub fn value(&self, z: Vec2) -> Vec2 {
        match self {
            KernelProfile::Aggregation => z,
            KernelProfile::Repulsion => -z,
            KernelProfile::Polynomial(c) => Vec2::along_x(horner(c, z.x)),
            KernelProfile::Zero => Vec2::ZERO,
        }
    }

    /// Analytic `(k'(0), k'''(0))` when available.
    fn analytic_derivatives(&self) -> Option<(f64, f64)> {
        match self {
            KernelProfile::Aggregation => Some((1.0, 0.0)),
            KernelProfile::Repulsion => Some((-1.0, 0.0)),
            KernelProfile::Zero => Some((0.0, 0.0)),
            KernelProfile::Polynomial(c) => {
                let at = |n: usize| c.get(n).copied().unwrap_or(0.0);
                Some((at(1), 6.0 * at(3)))
            }
        }
    }
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// Sensing neighborhood `U_R(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    /// Closed ball of radius `R`.
    Ball,
    /// `(x, x + R]`, one dimension only.
    Right,
    /// `[x - R, x)`, one dimension only.
    Left,
    /// `Right` where the taxis field is nonnegative, `Left` otherwise.
    TaxisAligned,
}

impl Neighborhood {
    /// Resolves `TaxisAligned` against the local taxis direction. Ties go right.
    pub fn resolve(self, taxis: Vec2) -> Neighborhood {
        match self {
            Neighborhood::TaxisAligned if taxis.x >= 0.0 => Neighborhood::Right,
            Neighborhood::TaxisAligned => Neighborhood::Left,
            other => other,
        }
    }

    pub fn is_isotropic(self) -> bool {
        self == Neighborhood::Ball
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionKernel {
    profile: KernelProfile,
    radius: f64,
    neighborhood: Neighborhood,
    derivatives: Option<(f64, f64)>,
}

impl InteractionKernel {
    pub fn new(profile: KernelProfile, radius: f64, neighborhood: Neighborhood) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidKernel(format!("sensing radius {radius} must be positive")));
        }
        Ok(InteractionKernel { profile, radius, neighborhood, derivatives: None })
    }

    /// `k(z) = z` on the closed ball of radius `radius`.
    pub fn aggregation(radius: f64) -> Result<Self> {
        Self::new(KernelProfile::Aggregation, radius, Neighborhood::Ball)
    }

    /// `k(z) = -z` on the closed ball of radius `radius`.
    pub fn repulsion(radius: f64) -> Result<Self> {
        Self::new(KernelProfile::Repulsion, radius, Neighborhood::Ball)
    }

    pub fn zero(radius: f64) -> Result<Self> {
        Self::new(KernelProfile::Zero, radius, Neighborhood::Ball)
    }

    /// Overrides `k'(0)` and `k'''(0)` with user supplied values.
    pub fn with_derivatives(mut self, k1: f64, k3: f64) -> Self {
        self.derivatives = Some((k1, k3));
        self
    }

    pub fn with_neighborhood(mut self, neighborhood: Neighborhood) -> Self {
        self.neighborhood = neighborhood;
        self
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    /// Checks that the kernel can be used on a grid of dimension `dim`.
    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        if dim == 2 {
            if !self.neighborhood.is_isotropic() {
                return Err(Error::InvalidKernel(
                    "anisotropic neighborhoods are only available in one dimension".into(),
                ));
            }
            if matches!(self.profile, KernelProfile::Polynomial(_)) {
                return Err(Error::InvalidKernel(
                    "polynomial kernels are only available in one dimension".into(),
                ));
            }
        }
        Ok(())
    }

    /// Raw profile `k(z)`, ignoring the support.
    pub fn profile_value(&self, z: Vec2) -> Vec2 {
        self.profile.value(z)
    }

    /// Whether displacement `z = y - x` lies in `U_R(x)` given the taxis at `x`.
    #[inline]
    pub fn in_support(&self, z: Vec2, taxis: Vec2) -> bool {
        let r = self.radius * (1.0 + SUPPORT_SLACK);
        match self.neighborhood.resolve(taxis) {
            Neighborhood::Ball => z.norm_sq() <= r * r,
            Neighborhood::Right => z.x > 0.0 && z.x <= r,
            Neighborhood::Left => z.x < 0.0 && z.x >= -r,
            Neighborhood::TaxisAligned => unreachable!("resolved above"),
        }
    }

    /// `K(x, y)` with the neighborhood oriented by `taxis` (only relevant for
    /// [`Neighborhood::TaxisAligned`]).
    #[inline]
    pub fn eval_oriented(&self, x: Vec2, y: Vec2, taxis: Vec2) -> Vec2 {
        let z = y - x;
        if self.in_support(z, taxis) {
            self.profile.value(z)
        } else {
            Vec2::ZERO
        }
    }

    /// `K(x, y) = k(y - x)` if `y` is in `U_R(x)`, zero otherwise.
    pub fn eval_kernel(&self, x: Vec2, y: Vec2) -> Vec2 {
        self.eval_oriented(x, y, Vec2::ZERO)
    }

    /// `(k'(0), k'''(0))` of the x-component, analytic when known, otherwise
    /// central differences with step `1e-4 R`.
    pub fn derivatives_at_zero(&self) -> (f64, f64) {
        if let Some(d) = self.derivatives {
            return d;
        }
        if let Some(d) = self.profile.analytic_derivatives() {
            return d;
        }
        let h = 1e-4 * self.radius;
        let k = |z: f64| self.profile.value(Vec2::along_x(z)).x;
        let k1 = (k(h) - k(-h)) / (2.0 * h);
        let k3 = (k(2.0 * h) - 2.0 * k(h) + 2.0 * k(-h) - k(-2.0 * h)) / (2.0 * h * h * h);
        (k1, k3)
    }

    /// Spot check of `k(0) = 0` and `k(-z) = -k(z)` at the given sample points.
    pub fn satisfies_h1_h2(&self, samples: &[Vec2]) -> bool {
        let close = |a: Vec2, b: Vec2| (a - b).norm() <= 1e-12 * (1.0 + a.norm());
        close(self.profile.value(Vec2::ZERO), Vec2::ZERO)
            && samples
                .iter()
                .all(|&z| close(self.profile.value(-z), -self.profile.value(z)))
    }
}

/// `sum_h K(x, x_h)` in atom order.
pub fn discrete_sum(x: Vec2, atoms: &[Vec2], kern: &InteractionKernel, taxis: Vec2) -> Vec2 {
    let mut acc = Vec2::ZERO;
    for &a in atoms {
        acc += kern.eval_oriented(x, a, taxis);
    }
    acc
}

/// `integral K(x, y) rho(y) dy` by the midpoint rule over cells whose centers
/// lie in `U_R(x)`.
pub fn continuous_integral(
    x: Vec2,
    grid: &DomainGrid,
    density: &[f64],
    kern: &InteractionKernel,
    taxis: Vec2,
) -> Vec2 {
    let dx = grid.dx();
    let r = kern.radius();
    let lo = grid.lower();
    let span = |p: f64, l: f64, n: usize| -> (usize, usize) {
        let a = ((p - r - l) / dx - 1.0).max(0.0) as usize;
        let b = (ceil((p + r - l) / dx) as usize + 1).min(n);
        (a.min(n), b)
    };
    let (i0, i1) = span(x.x, lo.x, grid.nx());
    let (j0, j1) = if grid.dim() == 1 { (0, 1) } else { span(x.y, lo.y, grid.ny()) };
    let mut acc = Vec2::ZERO;
    for j in j0..j1 {
        for i in i0..i1 {
            let rho = density[grid.index(i, j)];
            if rho == 0.0 {
                continue;
            }
            let z = grid.center(i, j) - x;
            if kern.in_support(z, taxis) {
                acc += kern.profile_value(z) * rho;
            }
        }
    }
    acc * grid.cell_volume()
}

/// Atomic part of the velocity without taxis, `sum_h K(x, x_h)`.
pub fn velocity_discrete(x: Vec2, m: &HybridMeasure, kern: &InteractionKernel, taxis: Vec2) -> Vec2 {
    discrete_sum(x, m.atoms(), kern, taxis)
}

/// Continuous part of the velocity without taxis, `N integral K rho`.
pub fn velocity_continuous(x: Vec2, m: &HybridMeasure, kern: &InteractionKernel, taxis: Vec2) -> Vec2 {
    continuous_integral(x, m.grid(), m.density(), kern, taxis) * m.n() as f64
}

/// Full hybrid velocity at a point. `taxis` is the precomputed drift at `x`.
pub fn velocity(x: Vec2, m: &HybridMeasure, kern: &InteractionKernel, taxis: Vec2) -> Vec2 {
    let u = m.u();
    let mut v = taxis;
    if u < 1.0 {
        v += discrete_sum(x, m.atoms(), kern, taxis) * (1.0 - u);
    }
    if u > 0.0 {
        v += continuous_integral(x, m.grid(), m.density(), kern, taxis) * (u * m.n() as f64);
    }
    v
}

/// Precomputed `k(z) dx^d` for every grid offset inside one resolved
/// neighborhood. Offsets use exact integer geometry, so every cell sees the
/// same stencil.
#[derive(Debug, Clone)]
struct OffsetStencil {
    entries: Vec<(isize, isize, Vec2)>,
}

impl OffsetStencil {
    fn build(grid: &DomainGrid, kern: &InteractionKernel, side: Neighborhood) -> Self {
        let dx = grid.dx();
        let reach = ceil(kern.radius() / dx) as isize + 1;
        let b_range = if grid.dim() == 1 { 0..=0 } else { -reach..=reach };
        let vol = grid.cell_volume();
        let oriented = match side {
            Neighborhood::Left => Vec2::along_x(-1.0),
            _ => Vec2::along_x(1.0),
        };
        let kern_side = kern.clone().with_neighborhood(side);
        let mut entries = Vec::new();
        for b in b_range {
            for a in -reach..=reach {
                let z = Vec2::new(a as f64 * dx, b as f64 * dx);
                if kern_side.in_support(z, oriented) {
                    let w = kern.profile_value(z) * vol;
                    if w != Vec2::ZERO {
                        entries.push((a, b, w));
                    }
                }
            }
        }
        OffsetStencil { entries }
    }

    #[inline]
    fn apply(&self, grid: &DomainGrid, density: &[f64], i: usize, j: usize) -> Vec2 {
        let nx = grid.nx() as isize;
        let ny = grid.ny() as isize;
        let mut acc = Vec2::ZERO;
        for &(a, b, w) in &self.entries {
            let ii = i as isize + a;
            let jj = j as isize + b;
            if ii < 0 || jj < 0 || ii >= nx || jj >= ny {
                continue;
            }
            let rho = density[(ii + nx * jj) as usize];
            if rho != 0.0 {
                acc += w * rho;
            }
        }
        acc
    }
}

/// Velocity evaluated at every cell center and every atom.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub cells: Vec<Vec2>,
    pub atoms: Vec<Vec2>,
}

impl VelocityField {
    pub fn max_speed(&self) -> f64 {
        self.cells
            .iter()
            .chain(self.atoms.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Velocity at all cell centers and atoms. `taxis_cells` holds the drift at
/// cell centers, `taxis_atoms` the drift at atoms.
pub fn velocity_field(
    m: &HybridMeasure,
    kern: &InteractionKernel,
    taxis_cells: &[Vec2],
    taxis_atoms: &[Vec2],
) -> VelocityField {
    velocity_field_masked(m, kern, taxis_cells, taxis_atoms, None)
}

/// As [`velocity_field`], skipping cells where `mask` is false (their entry
/// is left at zero).
pub fn velocity_field_masked(
    m: &HybridMeasure,
    kern: &InteractionKernel,
    taxis_cells: &[Vec2],
    taxis_atoms: &[Vec2],
    mask: Option<&[bool]>,
) -> VelocityField {
    let grid = m.grid();
    let u = m.u();
    let weight = u * m.n() as f64;
    let needs_right = kern.neighborhood() != Neighborhood::Left;
    let needs_left = matches!(kern.neighborhood(), Neighborhood::Left | Neighborhood::TaxisAligned);
    let primary = match kern.neighborhood() {
        Neighborhood::Ball => Some(OffsetStencil::build(grid, kern, Neighborhood::Ball)),
        _ if needs_right => Some(OffsetStencil::build(grid, kern, Neighborhood::Right)),
        _ => None,
    };
    let left = if needs_left {
        Some(OffsetStencil::build(grid, kern, Neighborhood::Left))
    } else {
        None
    };
    let density = m.density();
    let cells = map_indices(grid.len(), |k| {
        if let Some(mask) = mask {
            if !mask[k] {
                return Vec2::ZERO;
            }
        }
        let (i, j) = grid.coords(k);
        let x = grid.center(i, j);
        let taxis = taxis_cells[k];
        let mut v = taxis;
        if u < 1.0 {
            v += discrete_sum(x, m.atoms(), kern, taxis) * (1.0 - u);
        }
        if u > 0.0 {
            let stencil = match kern.neighborhood().resolve(taxis) {
                Neighborhood::Left => left.as_ref(),
                _ => primary.as_ref(),
            };
            if let Some(s) = stencil {
                v += s.apply(grid, density, i, j) * weight;
            }
        }
        v
    });
    let atoms = m
        .atoms()
        .iter()
        .zip(taxis_atoms)
        .map(|(&x, &t)| velocity(x, m, kern, t))
        .collect();
    VelocityField { cells, atoms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainGrid;
    use crate::scenario::{indicator_density, lattice_atoms};
    use proptest::prelude::*;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn eval_kernel_examples() {
        let k = InteractionKernel::aggregation(0.3).unwrap();
        assert_eq!(k.eval_kernel(Vec2::ZERO, Vec2::ZERO), Vec2::ZERO);
        assert_eq!(k.eval_kernel(Vec2::ZERO, Vec2::new(0.5, 0.0)), Vec2::ZERO);
        assert_eq!(k.eval_kernel(Vec2::ZERO, Vec2::new(0.1, 0.2)), Vec2::new(0.1, 0.2));
    }

    #[test]
    fn closed_ball_includes_the_sensing_sphere() {
        let k = InteractionKernel::aggregation(0.3).unwrap();
        assert_eq!(k.eval_kernel(Vec2::ZERO, Vec2::new(0.3, 0.0)), Vec2::new(0.3, 0.0));
        assert_eq!(k.eval_kernel(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.3)).y, 1.3 - 1.0);
    }

    #[test]
    fn half_windows_follow_the_taxis_sign() {
        let k = InteractionKernel::new(KernelProfile::Aggregation, 1.0, Neighborhood::TaxisAligned).unwrap();
        let right = Vec2::along_x(0.5);
        let left = Vec2::along_x(-0.5);
        assert_eq!(k.eval_oriented(Vec2::ZERO, right, Vec2::along_x(1.0)), right);
        assert_eq!(k.eval_oriented(Vec2::ZERO, left, Vec2::along_x(1.0)), Vec2::ZERO);
        assert_eq!(k.eval_oriented(Vec2::ZERO, left, Vec2::along_x(-2.0)), left);
        // zero taxis picks the right half
        assert_eq!(k.eval_oriented(Vec2::ZERO, right, Vec2::ZERO), right);
        assert!(k.check_dimension(2).is_err());
        assert!(k.check_dimension(1).is_ok());
    }

    #[test]
    fn derivatives_prefer_analytic_values() {
        let poly = InteractionKernel::new(
            KernelProfile::Polynomial(alloc::vec![0.0, 2.0, 0.0, -0.5]),
            0.5,
            Neighborhood::Ball,
        )
        .unwrap();
        assert_eq!(poly.derivatives_at_zero(), (2.0, -3.0));
        let supplied = poly.clone().with_derivatives(7.0, 8.0);
        assert_eq!(supplied.derivatives_at_zero(), (7.0, 8.0));
        assert!(poly.satisfies_h1_h2(&[Vec2::along_x(0.1), Vec2::along_x(0.37)]));
        let shifted = InteractionKernel::new(
            KernelProfile::Polynomial(alloc::vec![0.1, 1.0]),
            0.5,
            Neighborhood::Ball,
        )
        .unwrap();
        assert!(!shifted.satisfies_h1_h2(&[Vec2::along_x(0.1)]));
    }

    fn empty_density_measure(atoms: Vec<Vec2>, u: f64) -> HybridMeasure {
        let g = DomainGrid::square(-1.0, 1.0, 20).unwrap();
        let n = atoms.len();
        let rho = indicator_density(&g, Vec2::new(-0.5, -0.5), Vec2::new(0.5, 0.5));
        HybridMeasure::from_parts(g, atoms, rho, u, n).unwrap()
    }

    #[test]
    fn velocity_examples() {
        let zero = InteractionKernel::zero(0.3).unwrap();
        let m = empty_density_measure(alloc::vec![Vec2::ZERO, Vec2::new(0.2, 0.0)], 0.4);
        assert_eq!(velocity(Vec2::ZERO, &m, &zero, Vec2::new(0.3, -0.1)), Vec2::new(0.3, -0.1));

        let agg = InteractionKernel::aggregation(0.3).unwrap();
        let atomic = empty_density_measure(alloc::vec![Vec2::ZERO, Vec2::new(0.2, 0.0)], 0.0);
        assert_eq!(velocity(Vec2::ZERO, &atomic, &agg, Vec2::ZERO), Vec2::new(0.2, 0.0));
    }

    #[test]
    fn symmetric_configuration_has_zero_velocity_at_center() {
        let atoms = alloc::vec![
            Vec2::new(0.1, 0.05),
            Vec2::new(-0.1, -0.05),
            Vec2::new(0.0, 0.2),
            Vec2::new(0.0, -0.2),
        ];
        let m = empty_density_measure(atoms, 0.5).normalized().unwrap();
        let agg = InteractionKernel::aggregation(0.3).unwrap();
        assert!(close(velocity(Vec2::ZERO, &m, &agg, Vec2::ZERO), Vec2::ZERO, 1e-14));
    }

    #[test]
    fn field_matches_pointwise_velocity() {
        let g = DomainGrid::square(0.0, 4.0, 60).unwrap();
        let atoms = lattice_atoms(5, Vec2::new(1.0, 1.0), Vec2::new(3.0, 3.0));
        let mut rho = indicator_density(&g, Vec2::new(1.0, 1.0), Vec2::new(3.0, 3.0));
        for (k, v) in rho.iter_mut().enumerate() {
            *v *= 1.0 + 0.3 * ((k * 7919) % 13) as f64 / 13.0;
        }
        let m = HybridMeasure::from_parts(g.clone(), atoms, rho, 0.3, 25).unwrap().normalized().unwrap();
        let agg = InteractionKernel::aggregation(0.3).unwrap();
        let taxis = alloc::vec![Vec2::new(0.01, -0.02); g.len()];
        let f = velocity_field(&m, &agg, &taxis, &alloc::vec![Vec2::ZERO; 25]);
        for k in (0..g.len()).step_by(37) {
            let p = velocity(g.center_of(k), &m, &agg, taxis[k]);
            assert!(close(f.cells[k], p, 1e-12), "cell {k}: {:?} vs {p:?}", f.cells[k]);
        }
        for (h, a) in m.atoms().iter().enumerate() {
            assert_eq!(f.atoms[h], velocity(*a, &m, &agg, Vec2::ZERO));
        }
    }

    #[test]
    fn lattice_atoms_are_stationary_at_small_radius() {
        let g = DomainGrid::square(0.0, 4.0, 40).unwrap();
        let atoms = lattice_atoms(5, Vec2::new(1.0, 1.0), Vec2::new(3.0, 3.0));
        let rho = indicator_density(&g, Vec2::new(1.0, 1.0), Vec2::new(3.0, 3.0));
        let m = HybridMeasure::new(g, atoms, rho, 0.0).unwrap();
        let agg = InteractionKernel::aggregation(0.3).unwrap();
        let f = velocity_field(&m, &agg, &alloc::vec![Vec2::ZERO; m.grid().len()], &alloc::vec![Vec2::ZERO; 25]);
        assert!(f.atoms.iter().all(|v| *v == Vec2::ZERO));
    }

    #[test]
    fn reflection_symmetric_measure_gives_antisymmetric_normal_velocity() {
        let g = DomainGrid::square(0.0, 4.0, 40).unwrap();
        let atoms = alloc::vec![Vec2::new(1.2, 2.0), Vec2::new(2.8, 2.0), Vec2::new(1.9, 1.7), Vec2::new(2.1, 1.7)];
        let mut rho = alloc::vec![0.0; g.len()];
        for j in 0..40 {
            for i in 0..40 {
                let p = g.center(i, j);
                let d = (p - Vec2::new(2.0, 2.0)).norm_sq();
                rho[g.index(i, j)] = crate::math::exp(-d / 0.3) * (1.0 + 0.1 * ((j * 31) % 7) as f64);
            }
        }
        // force mirror symmetry about x = 2
        for j in 0..40 {
            for i in 0..20 {
                let a = rho[g.index(i, j)];
                rho[g.index(39 - i, j)] = a;
            }
        }
        let m = HybridMeasure::from_parts(g.clone(), atoms, rho, 0.5, 4).unwrap().normalized().unwrap();
        let agg = InteractionKernel::aggregation(0.3).unwrap();
        let f = velocity_field(&m, &agg, &alloc::vec![Vec2::ZERO; g.len()], &alloc::vec![Vec2::ZERO; 4]);
        for j in 0..40 {
            for i in 0..20 {
                let a = f.cells[g.index(i, j)];
                let b = f.cells[g.index(39 - i, j)];
                assert!((a.x + b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_density_far_from_boundary_has_negligible_velocity() {
        let g = DomainGrid::square(0.0, 4.0, 80).unwrap();
        let rho = alloc::vec![1.0 / 16.0; g.len()];
        let m = HybridMeasure::new(g, alloc::vec![Vec2::ZERO; 3], rho, 1.0).unwrap();
        let agg = InteractionKernel::aggregation(0.3).unwrap();
        // direct quadrature of an odd integrand over a symmetric window
        for p in [Vec2::new(2.0, 2.0), Vec2::new(1.5, 2.5)] {
            let v = velocity(p, &m, &agg, Vec2::ZERO);
            assert!(v.norm() < 1e-12, "{v:?}");
        }
    }

    proptest! {
        #[test]
        fn velocity_is_linear_in_the_mixture(u in 0.0..=1.0f64, px in 0.5..3.5f64, py in 0.5..3.5f64, seed in 0u64..1000) {
            let g = DomainGrid::square(0.0, 4.0, 32).unwrap();
            let atoms: Vec<Vec2> = (0..9).map(|h| {
                let s = (seed + h as u64 * 7) as f64;
                Vec2::new(1.5 + 0.11 * (s % 9.0), 1.5 + 0.07 * (s % 13.0))
            }).collect();
            let mut rho = alloc::vec![0.0; g.len()];
            for (k, v) in rho.iter_mut().enumerate() { *v = ((k as u64 * 31 + seed) % 17) as f64; }
            let m = HybridMeasure::from_parts(g, atoms, rho, u, 9).unwrap().normalized().unwrap();
            let agg = InteractionKernel::aggregation(0.6).unwrap();
            let x = Vec2::new(px, py);
            let whole = velocity(x, &m, &agg, Vec2::ZERO);
            let parts = velocity_discrete(x, &m, &agg, Vec2::ZERO) * (1.0 - u)
                + velocity_continuous(x, &m, &agg, Vec2::ZERO) * u;
            prop_assert!(close(whole, parts, 1e-10 * (1.0 + whole.norm())));
        }

        #[test]
        fn kernel_exchange_is_antisymmetric(ax in -1.0..1.0f64, ay in -1.0..1.0f64, bx in -1.0..1.0f64, by in -1.0..1.0f64) {
            let agg = InteractionKernel::aggregation(0.8).unwrap();
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            prop_assert_eq!(agg.eval_kernel(a, b), -agg.eval_kernel(b, a));
        }

        #[test]
        fn translation_shifts_the_field(sx in -5i32..5, sy in -5i32..5) {
            let g = DomainGrid::square(0.0, 4.0, 40).unwrap();
            let dx = g.dx();
            let mut rho = alloc::vec![0.0; g.len()];
            for j in 15..25 { for i in 14..27 { rho[g.index(i, j)] = 1.0 + ((i * j) % 5) as f64; } }
            let mut shifted = alloc::vec![0.0; g.len()];
            for j in 15..25 { for i in 14..27 {
                shifted[g.index((i as i32 + sx) as usize, (j as i32 + sy) as usize)] = rho[g.index(i, j)];
            } }
            let s = Vec2::new(sx as f64 * dx, sy as f64 * dx);
            let atoms = alloc::vec![Vec2::new(1.93, 2.11), Vec2::new(2.05, 1.98)];
            let moved: Vec<Vec2> = atoms.iter().map(|a| *a + s).collect();
            let m = HybridMeasure::from_parts(g.clone(), atoms, rho, 0.5, 2).unwrap().normalized().unwrap();
            let m2 = HybridMeasure::from_parts(g.clone(), moved, shifted, 0.5, 2).unwrap().normalized().unwrap();
            let agg = InteractionKernel::aggregation(0.3).unwrap();
            let x = Vec2::new(2.01, 1.97);
            let v = velocity(x, &m, &agg, Vec2::ZERO);
            let v2 = velocity(x + s, &m2, &agg, Vec2::ZERO);
            prop_assert!(close(v, v2, 1e-10));
        }

        #[test]
        fn changes_outside_the_ball_do_not_matter(k in 0usize..1600, bump in 0.1..5.0f64) {
            let g = DomainGrid::square(0.0, 4.0, 40).unwrap();
            let x = Vec2::new(2.0, 2.0);
            let mut rho = alloc::vec![1.0; g.len()];
            let base = HybridMeasure::from_parts(g.clone(), alloc::vec![Vec2::new(2.1, 2.0)], rho.clone(), 0.5, 1).unwrap();
            let agg = InteractionKernel::aggregation(0.3).unwrap();
            let far = (g.center_of(k) - x).norm() > 0.3 * (1.0 + 1e-6);
            prop_assume!(far);
            rho[k] += bump;
            let changed = HybridMeasure::from_parts(g, alloc::vec![Vec2::new(2.1, 2.0)], rho, 0.5, 1).unwrap();
            prop_assert_eq!(velocity(x, &base, &agg, Vec2::ZERO), velocity(x, &changed, &agg, Vec2::ZERO));
        }
    }
}

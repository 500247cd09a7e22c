//! Local approximations of the one-dimensional nonlocal model for a small
//! sensing radius.
//!
//! Expanding `k` and `rho` to fourth order around the test point turns
//! `v(x) = N integral_{U_R(x)} k(y - x) rho(y) dy` into
//!
//! ```text
//! v = C0 rho + C1 rho' + C2 rho'' + C3 rho''' + C4 rho''''
//! ```
//!
//! and the continuity equation into the degenerate diffusion equation
//!
//! ```text
//! d rho/dt = -d/dx (C0 rho^2) - d/dx (rho (C1 rho' + C2 rho'' + C3 rho'''))
//! ```
//!
//! When `k'(0) < 0` (local repulsion) the expansion is stopped at second order
//! and the model is a porous-medium type equation. When `k'(0) > 0` the
//! second-order term is backward and the fourth-order term is required; that
//! model is only formally well behaved and its solver is exploratory.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::DomainGrid;
use crate::interaction::{InteractionKernel, Neighborhood};
use crate::math::{cos, observed_order, powi, Vec2};
use crate::measure::HybridMeasure;
use crate::transport::{max_relevant_speed, upwind_update, DensityUpdate};
use crate::{Error, Result};

/// Taylor data of the kernel profile at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDerivatives {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl KernelDerivatives {
    pub fn new(k0: f64, k1: f64, k2: f64, k3: f64, k4: f64) -> Self {
        KernelDerivatives { k0, k1, k2, k3, k4 }
    }

    /// Kernel without self interaction and odd (`k0 = k2 = k4 = 0`).
    pub fn odd(k1: f64, k3: f64) -> Self {
        Self::new(0.0, k1, 0.0, k3, 0.0)
    }

    /// Derivatives of an odd kernel, `k'(0)` and `k'''(0)` taken from the
    /// kernel (analytic when known).
    pub fn of_odd_kernel(kern: &InteractionKernel) -> Self {
        let (k1, k3) = kern.derivatives_at_zero();
        Self::odd(k1, k3)
    }

    pub fn is_odd(&self) -> bool {
        self.k0 == 0.0 && self.k2 == 0.0 && self.k4 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Isotropic,
    Anisotropic(Side),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCoefficients {
    pub c: [f64; 5],
    pub regime: Regime,
    /// Whether the kernel derivatives satisfied `k0 = k2 = k4 = 0`.
    pub odd_kernel: bool,
}

impl LocalCoefficients {
    pub fn label(&self) -> String {
        let base = match self.regime {
            Regime::Isotropic => "isotropic",
            Regime::Anisotropic(Side::Right) => "anisotropic-right",
            Regime::Anisotropic(Side::Left) => "anisotropic-left",
        };
        if self.odd_kernel {
            format!("{base}-H1H2")
        } else {
            String::from(base)
        }
    }

    /// `sum_n C_n rho^(n)` given the derivatives `rho, rho', ..., rho''''`.
    pub fn velocity(&self, derivatives: [f64; 5]) -> f64 {
        self.c.iter().zip(derivatives).map(|(c, d)| c * d).sum()
    }
}

/// Coefficients for the symmetric window `(x - R, x + R)`.
pub fn isotropic_coefficients(kd: &KernelDerivatives, n: usize, r: f64) -> LocalCoefficients {
    let nf = n as f64;
    let KernelDerivatives { k0, k1, k2, k3, k4 } = *kd;
    let r2 = r * r;
    let c = [
        (2.0 * k0 + k2 * r2 / 3.0 + k4 * r2 * r2 / 60.0) * nf * r,
        (2.0 * k1 / 3.0 + k3 * r2 / 15.0) * nf * powi(r, 3),
        (k0 / 3.0 + k2 * r2 / 10.0) * nf * powi(r, 3),
        k1 * nf * powi(r, 5) / 15.0,
        k0 * nf * powi(r, 5) / 60.0,
    ];
    LocalCoefficients { c, regime: Regime::Isotropic, odd_kernel: kd.is_odd() }
}

/// Coefficients for the half windows `(x, x + R)` and `(x - R, x)`.
///
/// The left window follows from the right one by `z -> -z`: the derivative
/// `k_j` picks up `(-1)^j` and the coefficient `C_n` picks up `(-1)^n`.
pub fn anisotropic_coefficients(kd: &KernelDerivatives, n: usize, r: f64, side: Side) -> LocalCoefficients {
    let mirrored;
    let k = match side {
        Side::Right => kd,
        Side::Left => {
            mirrored = KernelDerivatives::new(kd.k0, -kd.k1, kd.k2, -kd.k3, kd.k4);
            &mirrored
        }
    };
    let nf = n as f64;
    let KernelDerivatives { k0, k1, k2, k3, k4 } = *k;
    let c_right = [
        (k0 + k1 * r / 2.0 + k2 * r * r / 6.0 + k3 * powi(r, 3) / 24.0 + k4 * powi(r, 4) / 120.0) * nf * r,
        (k0 / 2.0 + k1 * r / 3.0 + k2 * r * r / 8.0 + k3 * powi(r, 3) / 30.0) * nf * r * r,
        (k0 / 6.0 + k1 * r / 8.0 + k2 * r * r / 20.0) * nf * powi(r, 3),
        (k0 / 24.0 + k1 * r / 30.0) * nf * powi(r, 4),
        k0 * nf * powi(r, 5) / 120.0,
    ];
    let c = match side {
        Side::Right => c_right,
        Side::Left => {
            let mut c = c_right;
            c[1] = -c[1];
            c[3] = -c[3];
            c
        }
    };
    LocalCoefficients { c, regime: Regime::Anisotropic(side), odd_kernel: kd.is_odd() }
}

/// Truncation order of the local model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionOrder {
    Second,
    Fourth,
}

impl ExpansionOrder {
    /// Second order for local repulsion (`k'(0) < 0`), fourth otherwise.
    pub fn default_for(k1: f64) -> Self {
        if k1 < 0.0 {
            ExpansionOrder::Second
        } else {
            ExpansionOrder::Fourth
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    NoFlux,
}

/// A local degenerate diffusion model on a uniform 1D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalModel {
    pub coeffs: LocalCoefficients,
    pub order: ExpansionOrder,
    pub boundary: Boundary,
}

impl LocalModel {
    /// Checks well-posedness: the second-order model with `k'(0) > 0` is
    /// backward diffusion.
    pub fn new(coeffs: LocalCoefficients, kernel_slope_sign: f64, order: ExpansionOrder, boundary: Boundary) -> Result<Self> {
        if order == ExpansionOrder::Second && kernel_slope_sign > 0.0 {
            return Err(Error::IllPosedConfig(
                "second-order model with k'(0) > 0 is backward diffusion; use the fourth-order model".into(),
            ));
        }
        Ok(LocalModel { coeffs, order, boundary })
    }

    /// Explicit step size with a safety factor for the given density bound.
    pub fn stable_dt(&self, rho_max: f64, dx: f64) -> f64 {
        let c = &self.coeffs.c;
        let mut rate: f64 = 2.0 * c[1].abs() * rho_max / (dx * dx) + 2.0 * c[0].abs() * rho_max / dx;
        if self.order == ExpansionOrder::Fourth {
            rate += 8.0 * c[3].abs() * rho_max / powi(dx, 4) + 4.0 * c[2].abs() * rho_max / powi(dx, 3);
        }
        if rate == 0.0 {
            f64::INFINITY
        } else {
            0.4 / rate
        }
    }

    /// One explicit conservative step. The fourth-order model clamps negative
    /// values to zero afterwards.
    pub fn step(&self, rho: &mut [f64], dx: f64, dt: f64) {
        let n = rho.len();
        let at = |i: isize| -> f64 {
            let n = n as isize;
            let k = match self.boundary {
                Boundary::Periodic => i.rem_euclid(n),
                Boundary::NoFlux => {
                    if i < 0 {
                        -i - 1
                    } else if i >= n {
                        2 * n - i - 1
                    } else {
                        i
                    }
                }
            };
            rho[k as usize]
        };
        let c = self.coeffs.c;
        let fourth = self.order == ExpansionOrder::Fourth;
        // flux[f] sits between cells f - 1 and f
        let mut flux = vec![0.0; n + 1];
        for (f, slot) in flux.iter_mut().enumerate() {
            if self.boundary == Boundary::NoFlux && (f == 0 || f == n) {
                continue;
            }
            let i = f as isize - 1;
            let (rm, r0, r1, r2) = (at(i - 1), at(i), at(i + 1), at(i + 2));
            let mid = 0.5 * (r0 + r1);
            let adv = if c[0] * (r0 + r1) >= 0.0 { c[0] * r0 * r0 } else { c[0] * r1 * r1 };
            let mut grad_terms = c[1] * (r1 - r0) / dx;
            if fourth {
                grad_terms += c[2] * (r2 - r1 - r0 + rm) / (2.0 * dx * dx);
                grad_terms += c[3] * (r2 - 3.0 * r1 + 3.0 * r0 - rm) / (dx * dx * dx);
            }
            *slot = adv + mid * grad_terms;
        }
        if self.boundary == Boundary::Periodic {
            flux[n] = flux[0];
        }
        let ratio = dt / dx;
        for i in 0..n {
            rho[i] -= ratio * (flux[i + 1] - flux[i]);
        }
        if fourth {
            for v in rho.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

/// One step of the local model; see [`LocalModel`].
pub fn local_pde_step(
    rho: &mut [f64],
    dx: f64,
    coeffs: &LocalCoefficients,
    kernel_slope_sign: f64,
    order: ExpansionOrder,
    boundary: Boundary,
    dt: f64,
) -> Result<()> {
    LocalModel::new(*coeffs, kernel_slope_sign, order, boundary)?.step(rho, dx, dt);
    Ok(())
}

/// Change of variables `x* = x / R`, `t* = |C1| t / R^2` that normalizes the
/// second-order coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescaling {
    pub radius: f64,
    pub c1_abs: f64,
}

impl Rescaling {
    pub fn new(coeffs: &LocalCoefficients, radius: f64) -> Self {
        Rescaling { radius, c1_abs: coeffs.c[1].abs() }
    }

    pub fn space(&self, x: f64) -> f64 {
        x / self.radius
    }

    pub fn time(&self, t: f64) -> f64 {
        self.c1_abs * t / (self.radius * self.radius)
    }

    /// Coefficients of the equation in rescaled variables:
    /// `C0 R/|C1|`, `sign C1`, `C2/(R|C1|)`, `C3/(R^2|C1|)`, `C4/(R^3|C1|)`.
    pub fn coefficients(&self, coeffs: &LocalCoefficients) -> LocalCoefficients {
        let (r, a) = (self.radius, self.c1_abs);
        let c = coeffs.c;
        LocalCoefficients {
            c: [c[0] * r / a, c[1] / a, c[2] / (r * a), c[3] / (r * r * a), c[4] / (r * r * r * a)],
            ..*coeffs
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; points];
    let mut weights = vec![0.0; points];
    let n = points as f64;
    for i in 0..points {
        let mut x = cos(core::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=points {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if points == 1 { x } else { p1 };
            let pm = if points == 1 { 1.0 } else { p0 };
            dp = n * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Nonlocal velocity `N integral_{U_R(x)} k(y - x) rho(y) dy` of a density
/// given as a function, by composite Gauss-Legendre quadrature. `taxis` only
/// orients [`Neighborhood::TaxisAligned`].
pub fn nonlocal_velocity_1d(rho: impl Fn(f64) -> f64, x: f64, kern: &InteractionKernel, n: usize, taxis: f64) -> f64 {
    let r = kern.radius();
    let (a, b) = match kern.neighborhood().resolve(Vec2::along_x(taxis)) {
        Neighborhood::Right => (0.0, r),
        Neighborhood::Left => (-r, 0.0),
        _ => (-r, r),
    };
    let rule = gauss_legendre(16);
    let integrand = |z: f64| kern.profile_value(Vec2::along_x(z)).x * rho(x + z);
    n as f64 * integrate(integrand, a, b, 8, &rule)
}

/// Velocity of a grid density at the cell centers (midpoint quadrature).
pub fn nonlocal_velocity_grid(grid: &DomainGrid, rho: &[f64], kern: &InteractionKernel, n: usize) -> Result<Vec<f64>> {
    let m = density_only(grid, rho, n)?;
    let zero = vec![Vec2::ZERO; grid.len()];
    let f = crate::interaction::velocity_field(&m, kern, &zero, &[]);
    Ok(f.cells.into_iter().map(|v| v.x).collect())
}

fn density_only(grid: &DomainGrid, rho: &[f64], n: usize) -> Result<HybridMeasure> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid("local models are one-dimensional".into()));
    }
    HybridMeasure::from_parts(grid.clone(), vec![Vec2::ZERO; n], rho.to_vec(), 1.0, n)
}

/// Upwind finite-volume step of the one-dimensional nonlocal model.
pub fn nonlocal_1d_step(
    grid: &DomainGrid,
    rho: &mut [f64],
    kern: &InteractionKernel,
    n: usize,
    dt: f64,
) -> Result<DensityUpdate> {
    let m = density_only(grid, rho, n)?;
    let zero = vec![Vec2::ZERO; grid.len()];
    let field = crate::interaction::velocity_field(&m, kern, &zero, &[]);
    let speed = max_relevant_speed(&m, &field);
    upwind_update(grid, rho, &field.cells, dt, speed)
}

/// Settings of a nonlocal-versus-local comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSettings {
    pub kernel: InteractionKernel,
    pub n: usize,
    pub radii: Vec<f64>,
    /// Physical time both models are evolved to.
    pub t_final: f64,
    /// Standard deviation of the Gaussian initial density.
    pub width: f64,
    /// Point where the velocity residual is measured.
    pub probe: f64,
    /// Grid cells per sensing radius.
    pub cells_per_radius: usize,
    /// Half width of the computational interval.
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub radius: f64,
    pub coefficients: LocalCoefficients,
    /// `|v_nonlocal - (C1 rho' + C3 rho''')|` at the probe for the Gaussian.
    pub velocity_residual: f64,
    /// L1 distance between the nonlocal and second-order local solutions.
    pub l1_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Fitted order of the velocity residual in `R`.
    pub residual_order: f64,
}

/// Derivatives `rho, rho', ..., rho''''` of the centered Gaussian.
pub fn gaussian_derivatives(x: f64, s: f64) -> [f64; 5] {
    let g = crate::math::exp(-x * x / (2.0 * s * s)) / (s * crate::math::sqrt(2.0 * core::f64::consts::PI));
    let y = x / s;
    // probabilists' Hermite polynomials: d^n/dx^n g = (-1/s)^n He_n(y) g
    let he = [1.0, y, y * y - 1.0, y * y * y - 3.0 * y, y * y * y * y - 6.0 * y * y + 3.0];
    let mut out = [0.0; 5];
    for (n, h) in he.iter().enumerate() {
        out[n] = powi(-1.0 / s, n as i32) * h * g;
    }
    out
}

/// Compares the nonlocal model with its local expansion for shrinking radii.
/// The kernel must be locally repulsive so that the second-order local model
/// is well posed.
pub fn convergence_study(settings: &ConvergenceSettings) -> Result<ConvergenceReport> {
    let (k1, _) = settings.kernel.derivatives_at_zero();
    if !(k1 < 0.0) {
        return Err(Error::IllPosedConfig("convergence study needs k'(0) < 0".into()));
    }
    let mut rows = Vec::with_capacity(settings.radii.len());
    for &r in &settings.radii {
        let kern = InteractionKernel::new(settings.kernel.profile().clone(), r, Neighborhood::Ball)?;
        let kd = KernelDerivatives::of_odd_kernel(&kern);
        let coeffs = isotropic_coefficients(&kd, settings.n, r);

        let s = settings.width;
        let d = gaussian_derivatives(settings.probe, s);
        let g = |x: f64| gaussian_derivatives(x, s)[0];
        let v = nonlocal_velocity_1d(g, settings.probe, &kern, settings.n, 0.0);
        let residual = (v - (coeffs.c[1] * d[1] + coeffs.c[3] * d[3])).abs();

        let dx = r / settings.cells_per_radius as f64;
        let cells = crate::math::round(2.0 * settings.half_width / dx) as usize;
        let grid = DomainGrid::new_1d(-settings.half_width, settings.half_width, cells)?;
        let rho0: Vec<f64> = grid.centers().iter().map(|p| g(p.x)).collect();
        let mut nonlocal = rho0.clone();
        let mut local = rho0;
        let mut second = coeffs;
        second.c[3] = 0.0;
        let model = LocalModel::new(second, k1, ExpansionOrder::Second, Boundary::NoFlux)?;
        let mut t = 0.0;
        while t < settings.t_final {
            let rho_max = nonlocal.iter().chain(local.iter()).copied().fold(0.0, f64::max);
            let m = density_only(&grid, &nonlocal, settings.n)?;
            let zero = vec![Vec2::ZERO; grid.len()];
            let field = crate::interaction::velocity_field(&m, &kern, &zero, &[]);
            let speed = max_relevant_speed(&m, &field);
            let mut dt = model.stable_dt(rho_max, dx).min(settings.t_final - t);
            if speed > 0.0 {
                dt = dt.min(0.5 * dx / speed);
            }
            upwind_update(&grid, &mut nonlocal, &field.cells, dt, speed)?;
            model.step(&mut local, dx, dt);
            t += dt;
        }
        let l1 = nonlocal.iter().zip(&local).map(|(a, b)| (a - b).abs()).sum::<f64>() * dx;
        rows.push(ConvergenceRow { radius: r, coefficients: coeffs, velocity_residual: residual, l1_difference: l1 });
    }
    let radii: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.velocity_residual).collect();
    let residual_order = if rows.len() >= 2 { observed_order(&radii, &res) } else { f64::NAN };
    Ok(ConvergenceReport { rows, residual_order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::KernelProfile;
    use crate::math::exp;

    #[test]
    fn isotropic_h1h2_example() {
        let c = isotropic_coefficients(&KernelDerivatives::odd(1.0, 0.0), 25, 0.3);
        assert!((c.c[1] - 0.45).abs() < 1e-14);
        assert!((c.c[3] - 25.0 * powi(0.3, 5) / 15.0).abs() < 1e-16);
        assert!((c.c[3] - 4.05e-3).abs() < 1e-15);
        assert_eq!((c.c[0], c.c[2], c.c[4]), (0.0, 0.0, 0.0));
        assert_eq!(c.label(), "isotropic-H1H2");
    }

    #[test]
    fn anisotropic_h1h2_example() {
        let c = anisotropic_coefficients(&KernelDerivatives::odd(1.0, 0.0), 1, 1.0, Side::Right);
        let expected = [0.5, 1.0 / 3.0, 0.125, 1.0 / 30.0, 0.0];
        for (a, b) in c.c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let l = anisotropic_coefficients(&KernelDerivatives::odd(1.0, 0.0), 1, 1.0, Side::Left);
        assert_eq!(l.c[0], -c.c[0]);
        assert_eq!(l.c[1], c.c[1]);
        assert_eq!(l.c[2], -c.c[2]);
        assert_eq!(l.c[3], c.c[3]);
    }

    #[test]
    fn zero_kernel_gives_zero_coefficients() {
        let z = KernelDerivatives::new(0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(isotropic_coefficients(&z, 10, 0.5).c, [0.0; 5]);
        assert_eq!(anisotropic_coefficients(&z, 10, 0.5, Side::Right).c, [0.0; 5]);
    }

    #[test]
    fn rescaled_constants_approach_one_tenth() {
        for r in [0.1, 0.01, 0.001] {
            let c = isotropic_coefficients(&KernelDerivatives::odd(-2.0, 5.0), 7, r);
            let ratio = c.c[3] / (r * r * c.c[1].abs());
            assert!((ratio + 0.1).abs() < 2.0 * r, "{ratio}");
            assert_eq!(c.c[1].signum(), -1.0);
        }
        let c = anisotropic_coefficients(&KernelDerivatives::odd(1.0, 0.0), 3, 0.2, Side::Right);
        let s = Rescaling::new(&c, 0.2).coefficients(&c);
        assert!((s.c[0] - 1.5).abs() < 1e-12);
        assert!((s.c[1] - 1.0).abs() < 1e-12);
        assert!((s.c[2] - 0.375).abs() < 1e-12);
        assert!((s.c[3] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn backward_second_order_model_is_rejected() {
        let c = isotropic_coefficients(&KernelDerivatives::odd(1.0, 0.0), 1, 0.1);
        let mut rho = vec![1.0; 10];
        let r = local_pde_step(&mut rho, 0.1, &c, 1.0, ExpansionOrder::Second, Boundary::Periodic, 1e-3);
        assert!(matches!(r, Err(Error::IllPosedConfig(_))));
        assert_eq!(ExpansionOrder::default_for(1.0), ExpansionOrder::Fourth);
        assert_eq!(ExpansionOrder::default_for(-1.0), ExpansionOrder::Second);
    }

    #[test]
    fn constant_density_is_stationary() {
        for (k1, order) in [(-1.0, ExpansionOrder::Second), (1.0, ExpansionOrder::Fourth)] {
            let c = anisotropic_coefficients(&KernelDerivatives::odd(k1, 0.0), 5, 0.3, Side::Right);
            let mut rho = vec![0.8; 64];
            local_pde_step(&mut rho, 0.05, &c, k1, order, Boundary::Periodic, 1e-5).unwrap();
            // the advective flux C0 rho^2 is uniform, so it cancels
            assert!(rho.iter().all(|v| (v - 0.8).abs() < 1e-15));
        }
    }

    fn bump(n: usize, dx: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * dx - 0.5 * n as f64 * dx;
                if x.abs() < 1.0 { (1.0 - x * x) * (1.0 - x * x) } else { 0.0 }
            })
            .collect()
    }

    fn variance(rho: &[f64], dx: f64) -> f64 {
        let n = rho.len() as f64;
        let xs = |i: usize| (i as f64 + 0.5) * dx - 0.5 * n * dx;
        let m0: f64 = rho.iter().sum();
        let m1: f64 = rho.iter().enumerate().map(|(i, v)| xs(i) * v).sum::<f64>() / m0;
        rho.iter().enumerate().map(|(i, v)| (xs(i) - m1) * (xs(i) - m1) * v).sum::<f64>() / m0
    }

    #[test]
    fn repulsive_second_order_model_spreads_and_conserves_mass() {
        let dx = 0.05;
        let mut rho = bump(120, dx);
        let c = isotropic_coefficients(&KernelDerivatives::odd(-1.0, 0.0), 10, 0.3);
        let model = LocalModel::new(c, -1.0, ExpansionOrder::Second, Boundary::NoFlux).unwrap();
        let dt = model.stable_dt(1.0, dx);
        let m0 = rho.iter().sum::<f64>() * dx;
        let mut var = variance(&rho, dx);
        for step in 0..10_000 {
            model.step(&mut rho, dx, dt);
            if step < 200 {
                let v = variance(&rho, dx);
                assert!(v > var, "variance must increase at step {step}");
                var = v;
            }
        }
        assert!((rho.iter().sum::<f64>() * dx - m0).abs() < 1e-12);
    }

    #[test]
    fn attractive_fourth_order_model_contracts_early() {
        let dx = 0.05;
        // a positive background keeps the clamp inactive
        let mut rho: Vec<f64> = bump(120, dx).iter().map(|v| v + 0.2).collect();
        let c = isotropic_coefficients(&KernelDerivatives::odd(1.0, 0.0), 10, 0.3);
        let model = LocalModel::new(c, 1.0, ExpansionOrder::Fourth, Boundary::Periodic).unwrap();
        let dt = model.stable_dt(1.0, dx);
        let m0 = rho.iter().sum::<f64>() * dx;
        let v0 = variance(&rho, dx);
        for _ in 0..200 {
            model.step(&mut rho, dx, dt);
        }
        assert!(variance(&rho, dx) <= v0);
        assert!((rho.iter().sum::<f64>() * dx - m0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_maps_solutions_onto_each_other() {
        let r = 0.2;
        let c = anisotropic_coefficients(&KernelDerivatives::odd(-1.5, 0.0), 40, r, Side::Right);
        let scale = Rescaling::new(&c, r);
        let cs = scale.coefficients(&c);
        let dx = 0.02;
        let original = LocalModel::new(c, -1.0, ExpansionOrder::Second, Boundary::NoFlux).unwrap();
        let rescaled = LocalModel::new(cs, -1.0, ExpansionOrder::Second, Boundary::NoFlux).unwrap();
        let dt = original.stable_dt(1.0, dx);
        let mut a = bump(150, dx);
        let mut b = a.clone();
        for _ in 0..300 {
            original.step(&mut a, dx, dt);
            rescaled.step(&mut b, scale.space(dx), scale.time(dt));
        }
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let v = integrate(|x| powi(x, 14) - 3.0 * x * x, -0.3, 0.7, 1, &rule);
        let exact = (powi(0.7, 15) + powi(0.3, 15)) / 15.0 - (powi(0.7, 3) + powi(0.3, 3));
        assert!((v - exact).abs() < 1e-15);
        assert!((rule.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_derivatives_match_finite_differences() {
        let h = 1e-3;
        let s = 0.7;
        let x = 0.4;
        let f = |x: f64| gaussian_derivatives(x, s);
        for n in 0..4 {
            let fd = (f(x + h)[n] - f(x - h)[n]) / (2.0 * h);
            assert!((fd - f(x)[n + 1]).abs() < 1e-5, "order {}", n + 1);
        }
        let g0 = exp(-x * x / (2.0 * s * s)) / (s * (2.0 * core::f64::consts::PI).sqrt());
        assert!((f(x)[0] - g0).abs() < 1e-15);
    }

    #[test]
    fn nonlocal_velocity_examples() {
        let kern = InteractionKernel::aggregation(0.25).unwrap();
        // linear density: v(0) = integral of z * z over (-R, R)
        let v = nonlocal_velocity_1d(|y| y, 0.0, &kern, 1, 0.0);
        assert!((v - 2.0 * powi(0.25, 3) / 3.0).abs() < 1e-15);
        // constant density, odd kernel
        assert!(nonlocal_velocity_1d(|_| 3.0, 0.7, &kern, 9, 0.0).abs() < 1e-15);
        // symmetric density at its center
        assert!(nonlocal_velocity_1d(|y| exp(-y * y), 0.0, &kern, 9, 0.0).abs() < 1e-15);

        let g = DomainGrid::new_1d(-2.0, 2.0, 80).unwrap();
        let rho: Vec<f64> = g.centers().iter().map(|p| exp(-p.x * p.x)).collect();
        let v = nonlocal_velocity_grid(&g, &rho, &kern, 3).unwrap();
        assert!((v[39] + v[40]).abs() < 1e-14);
        let flat = vec![0.25; 80];
        let v = nonlocal_velocity_grid(&g, &flat, &kern, 3).unwrap();
        assert!(v[20..60].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn nonlocal_step_conserves_mass() {
        let g = DomainGrid::new_1d(-2.0, 2.0, 80).unwrap();
        let mut rho: Vec<f64> = g.centers().iter().map(|p| exp(-4.0 * p.x * p.x)).collect();
        let kern = InteractionKernel::new(KernelProfile::Polynomial(vec![0.0, -1.0, 0.0, 0.5]), 0.3, Neighborhood::Ball).unwrap();
        let mut m0 = g.integrate(&rho);
        for _ in 0..100 {
            let report = nonlocal_1d_step(&g, &mut rho, &kern, 20, 0.01).unwrap();
            m0 -= report.outflow;
        }
        assert!((g.integrate(&rho) - m0).abs() < 1e-12);
        let too_big = nonlocal_1d_step(&g, &mut rho, &kern, 20_000, 1.0);
        assert!(matches!(too_big, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn tiny_radius_velocity_matches_expansion() {
        let kern = InteractionKernel::repulsion(1e-2).unwrap();
        let c = isotropic_coefficients(&KernelDerivatives::of_odd_kernel(&kern), 1, 1e-2);
        for x in [-1.3, -0.2, 0.5, 2.0] {
            let v = nonlocal_velocity_1d(|y| gaussian_derivatives(y, 1.0)[0], x, &kern, 1, 0.0);
            let d = gaussian_derivatives(x, 1.0);
            assert!((v - c.velocity(d)).abs() < 1e-8);
        }
    }
}

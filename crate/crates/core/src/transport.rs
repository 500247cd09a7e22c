//! Operator-split time stepping of the hybrid measure.
//!
//! One step, with the velocity frozen at the start of the step:
//! 1. taxis field (chemical drift plus constant drift),
//! 2. hybrid velocity at cell centers and atoms,
//! 3. first-order upwind finite-volume update of the density
//!    (plus an optional implicit `sigma Laplacian` substep),
//! 4. explicit Euler update of the atoms,
//! 5. reaction-diffusion step of the chemical.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::chemical::ChemicalField;
use crate::interaction::{velocity_field_masked, InteractionKernel, VelocityField};
use crate::linalg::ImplicitDiffusion;
use crate::math::Vec2;
use crate::measure::HybridMeasure;
use crate::scenario::{SimConfig, StepControl};
use crate::{Error, Result};

/// Cells whose density is below this fraction of the maximum do not constrain
/// the time step. The positivity limiter keeps them nonnegative.
pub const SIGNIFICANT_DENSITY: f64 = 1e-9;

/// Relative residual of the implicit motility solve.
const DIFFUSION_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub measure: HybridMeasure,
    pub chem: Option<ChemicalField>,
    pub kern: InteractionKernel,
}

impl SimState {
    pub fn new(measure: HybridMeasure, chem: Option<ChemicalField>, kern: InteractionKernel) -> Result<Self> {
        kern.check_dimension(measure.grid().dim())?;
        Ok(SimState { t: 0.0, measure, chem, kern })
    }

    /// Taxis drift at the cell centers and at the atoms.
    pub fn taxis(&self, drift: Vec2) -> (Vec<Vec2>, Vec<Vec2>) {
        let grid = self.measure.grid();
        match &self.chem {
            None => (vec![drift; grid.len()], vec![drift; self.measure.atoms().len()]),
            Some(c) => {
                let field = c.taxis_field();
                let xs: Vec<f64> = field.iter().map(|v| v.x).collect();
                let ys: Vec<f64> = field.iter().map(|v| v.y).collect();
                let at_atoms = self
                    .measure
                    .atoms()
                    .iter()
                    .map(|&a| Vec2::new(grid.interpolate(&xs, a), grid.interpolate(&ys, a)) + drift)
                    .collect();
                let cells = field.into_iter().map(|v| v + drift).collect();
                (cells, at_atoms)
            }
        }
    }

    /// Velocity at cells and atoms. Cell velocities are only computed where
    /// the density or one of its face neighbors is positive, and not at all
    /// for purely atomic measures.
    pub fn velocity(&self, drift: Vec2) -> VelocityField {
        let (taxis_cells, taxis_atoms) = self.taxis(drift);
        let mask = active_cells(&self.measure);
        velocity_field_masked(&self.measure, &self.kern, &taxis_cells, &taxis_atoms, Some(&mask))
    }
}

/// Cells whose velocity can influence a density update.
fn active_cells(m: &HybridMeasure) -> Vec<bool> {
    let g = m.grid();
    let rho = m.density();
    let mut mask = vec![false; g.len()];
    if m.u() == 0.0 {
        return mask;
    }
    let (nx, ny) = (g.nx(), g.ny());
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            if rho[k] > 0.0 {
                mask[k] = true;
                if i > 0 {
                    mask[k - 1] = true;
                }
                if i + 1 < nx {
                    mask[k + 1] = true;
                }
                if j > 0 {
                    mask[k - nx] = true;
                }
                if j + 1 < ny {
                    mask[k + nx] = true;
                }
            }
        }
    }
    mask
}

/// Largest speed over atoms and cells carrying a significant density.
pub fn max_relevant_speed(m: &HybridMeasure, field: &VelocityField) -> f64 {
    let mut vmax = field.atoms.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if m.u() > 0.0 {
        let floor = SIGNIFICANT_DENSITY * m.max_density();
        for (rho, v) in m.density().iter().zip(&field.cells) {
            if *rho > floor {
                vmax = vmax.max(v.norm());
            }
        }
    }
    vmax
}

/// Explicit Euler move of points, clamped to the domain.
pub fn advance_atoms(m: &HybridMeasure, velocities: &[Vec2], dt: f64) -> Vec<Vec2> {
    m.atoms()
        .iter()
        .zip(velocities)
        .map(|(&x, &v)| m.grid().clamp(x + v * dt))
        .collect()
}

/// Result of one conservative density update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityUpdate {
    /// Mass (integral of the density) that left through the boundary.
    pub outflow: f64,
    /// `|mass_after - (mass_before - outflow)|`.
    pub defect: f64,
}

/// First-order upwind update of `d rho/dt + div(rho v) = 0` with face
/// velocities averaged from the adjacent cell centers. Boundary faces admit
/// outflow only. A cell never loses more than it holds.
pub fn upwind_update(
    grid: &crate::DomainGrid,
    density: &mut [f64],
    velocity: &[Vec2],
    dt: f64,
    cfl_speed: f64,
) -> Result<DensityUpdate> {
    let dx = grid.dx();
    if dt * cfl_speed > dx {
        return Err(Error::CflViolation { dt, max_speed: cfl_speed, dx });
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let two_d = grid.dim() == 2;
    let vol = grid.cell_volume();
    let mass_before = grid.integrate(density);

    // fx[i + (nx + 1) j]: flux through the face left of cell (i, j)
    let mut fx = vec![0.0; (nx + 1) * ny];
    let mut fy = if two_d { vec![0.0; nx * (ny + 1)] } else { Vec::new() };
    for j in 0..ny {
        for i in 0..=nx {
            let a = if i == 0 {
                velocity[grid.index(0, j)].x.min(0.0)
            } else if i == nx {
                velocity[grid.index(nx - 1, j)].x.max(0.0)
            } else {
                0.5 * (velocity[grid.index(i - 1, j)].x + velocity[grid.index(i, j)].x)
            };
            fx[i + (nx + 1) * j] = if a > 0.0 {
                a * density[grid.index(i - 1, j)]
            } else if a < 0.0 {
                a * density[grid.index(i, j)]
            } else {
                0.0
            };
        }
    }
    if two_d {
        for j in 0..=ny {
            for i in 0..nx {
                let a = if j == 0 {
                    velocity[grid.index(i, 0)].y.min(0.0)
                } else if j == ny {
                    velocity[grid.index(i, ny - 1)].y.max(0.0)
                } else {
                    0.5 * (velocity[grid.index(i, j - 1)].y + velocity[grid.index(i, j)].y)
                };
                fy[i + nx * j] = if a > 0.0 {
                    a * density[grid.index(i, j - 1)]
                } else if a < 0.0 {
                    a * density[grid.index(i, j)]
                } else {
                    0.0
                };
            }
        }
    }

    // positivity limiter on cells whose outflow exceeds their content
    let ratio = dt / dx;
    let mut scale = vec![1.0; grid.len()];
    let mut limited = false;
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            let mut out = fx[i + 1 + (nx + 1) * j].max(0.0) - fx[i + (nx + 1) * j].min(0.0);
            if two_d {
                out += fy[i + nx * (j + 1)].max(0.0) - fy[i + nx * j].min(0.0);
            }
            let lost = ratio * out;
            if lost > density[k] {
                scale[k] = if lost > 0.0 { density[k] / lost } else { 1.0 };
                limited = true;
            }
        }
    }
    if limited {
        for j in 0..ny {
            for i in 0..=nx {
                let f = &mut fx[i + (nx + 1) * j];
                if *f > 0.0 && i > 0 {
                    *f *= scale[grid.index(i - 1, j)];
                } else if *f < 0.0 && i < nx {
                    *f *= scale[grid.index(i, j)];
                }
            }
        }
        if two_d {
            for j in 0..=ny {
                for i in 0..nx {
                    let f = &mut fy[i + nx * j];
                    if *f > 0.0 && j > 0 {
                        *f *= scale[grid.index(i, j - 1)];
                    } else if *f < 0.0 && j < ny {
                        *f *= scale[grid.index(i, j)];
                    }
                }
            }
        }
    }

    let mut boundary = 0.0;
    for j in 0..ny {
        boundary += fx[(nx + 1) * j + nx] - fx[(nx + 1) * j];
    }
    if two_d {
        for i in 0..nx {
            boundary += fy[i + nx * ny] - fy[i];
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            let mut div = fx[i + 1 + (nx + 1) * j] - fx[i + (nx + 1) * j];
            if two_d {
                div += fy[i + nx * (j + 1)] - fy[i + nx * j];
            }
            let next = density[k] - ratio * div;
            density[k] = if next < 0.0 { 0.0 } else { next };
        }
    }
    let outflow = dt * boundary * (vol / dx);
    let mass_after = grid.integrate(density);
    Ok(DensityUpdate { outflow, defect: (mass_after - (mass_before - outflow)).abs() })
}

/// Implicit random-motility substep `(I - dt sigma Laplacian) rho_new = rho`.
pub fn diffuse_density(grid: &crate::DomainGrid, density: &mut [f64], sigma: f64, dt: f64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let op = ImplicitDiffusion { grid, diag: 1.0, coef: [sigma * dt, sigma * dt] };
    let rhs = density.to_vec();
    op.solve(&rhs, density, DIFFUSION_TOL)?;
    for v in density.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Moves every atom by `dt` with the velocity of the current state.
pub fn atom_step(state: &SimState, drift: Vec2, dt: f64) -> Vec<Vec2> {
    let (_, taxis_atoms) = state.taxis(drift);
    let v: Vec<Vec2> = state
        .measure
        .atoms()
        .iter()
        .zip(&taxis_atoms)
        .map(|(&x, &t)| crate::interaction::velocity(x, &state.measure, &state.kern, t))
        .collect();
    advance_atoms(&state.measure, &v, dt)
}

/// Conservative density update by `dt` with the velocity of the current state.
pub fn density_step(state: &SimState, drift: Vec2, dt: f64) -> Result<(Vec<f64>, DensityUpdate)> {
    let field = state.velocity(drift);
    let speed = max_relevant_speed(&state.measure, &field);
    let mut rho = state.measure.density().to_vec();
    let report = upwind_update(state.measure.grid(), &mut rho, &field.cells, dt, speed)?;
    Ok((rho, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub max_speed: f64,
    pub outflow: f64,
    pub mass_defect: f64,
}

/// Running simulation: state, step control and diagnostics.
#[derive(Debug, Clone)]
pub struct Simulation {
    state: SimState,
    control: StepControl,
    sigma: f64,
    drift: Vec2,
    steps: usize,
    outflow: f64,
    max_defect: f64,
}

impl Simulation {
    pub fn new(state: SimState, control: StepControl, sigma: f64, drift: Vec2) -> Result<Self> {
        if !(control.dt_max > 0.0) || !(control.cfl > 0.0 && control.cfl <= 1.0) {
            return Err(Error::InvalidConfig(format!("invalid step control {control:?}")));
        }
        Ok(Simulation { state, control, sigma, drift, steps: 0, outflow: 0.0, max_defect: 0.0 })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let state = SimState::new(cfg.initial_measure()?, cfg.initial_chemical()?, cfg.kernel.clone())?;
        Self::new(state, cfg.step, cfg.sigma, cfg.drift)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Total density mass lost through the boundary so far.
    pub fn outflow(&self) -> f64 {
        self.outflow
    }

    /// Worst per-step density conservation defect so far.
    pub fn max_mass_defect(&self) -> f64 {
        self.max_defect
    }

    /// One split step, never stepping past `t_limit`. The state is only
    /// replaced if every updated value is finite.
    pub fn step(&mut self, t_limit: f64) -> Result<StepReport> {
        let state = &self.state;
        let m = &state.measure;
        let grid = m.grid();
        let field = state.velocity(self.drift);
        let speed = max_relevant_speed(m, &field);
        let mut dt = self.control.dt_max.min(t_limit - state.t);
        if speed > 0.0 {
            dt = dt.min(self.control.cfl * grid.dx() / speed);
        }
        if !(dt > 0.0) {
            return Err(Error::UnstableStep(format!("non-positive step {dt} at t={}", state.t)));
        }

        let mut density = m.density().to_vec();
        let mut update = DensityUpdate { outflow: 0.0, defect: 0.0 };
        if m.u() > 0.0 {
            update = upwind_update(grid, &mut density, &field.cells, dt, speed)?;
            diffuse_density(grid, &mut density, self.sigma, dt)?;
        }
        let atoms = advance_atoms(m, &field.atoms, dt);
        let chem = match &state.chem {
            Some(c) => {
                let mut c = c.clone();
                c.step(m, dt)?;
                Some(c)
            }
            None => None,
        };

        let t_next = if dt == t_limit - state.t { t_limit } else { state.t + dt };
        let finite = density.iter().all(|v| v.is_finite())
            && atoms.iter().all(|a| a.is_finite())
            && chem.as_ref().map_or(true, |c| c.concentration().iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite { t: t_next, step: self.steps + 1 });
        }

        let n = m.n();
        let u = m.u();
        let measure = HybridMeasure::from_parts(grid.clone(), atoms, density, u, n)?;
        self.state.measure = measure;
        self.state.chem = chem;
        self.state.t = t_next;
        self.steps += 1;
        self.outflow += update.outflow;
        self.max_defect = self.max_defect.max(update.defect);
        Ok(StepReport { dt, max_speed: speed, outflow: update.outflow, mass_defect: update.defect })
    }

    /// Runs to `t_end`, calling `observer` at each snapshot time (and for a
    /// snapshot at the current time, if listed).
    pub fn run_until<F>(&mut self, t_end: f64, snapshots: &[f64], mut observer: F) -> Result<()>
    where
        F: FnMut(&SimState) -> Result<()>,
    {
        let mut targets: Vec<f64> = snapshots.iter().copied().filter(|t| *t >= self.state.t && *t <= t_end).collect();
        targets.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        targets.dedup();
        let mut next = 0;
        while next < targets.len() && targets[next] <= self.state.t {
            observer(&self.state)?;
            next += 1;
        }
        while self.state.t < t_end {
            let limit = targets.get(next).copied().unwrap_or(t_end).min(t_end);
            self.step(limit)?;
            while next < targets.len() && targets[next] <= self.state.t {
                observer(&self.state)?;
                next += 1;
            }
        }
        Ok(())
    }
}

/// Runs a configuration to its final time and returns the snapshots.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<SimState>> {
    let mut sim = Simulation::from_config(cfg)?;
    let mut out = Vec::new();
    sim.run_until(cfg.step.t_max, &cfg.snapshots, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainGrid;
    use crate::math::exp;
    use crate::scenario::gaussian_density;

    fn one_d_state(rho: Vec<f64>, grid: DomainGrid, kern: InteractionKernel, atoms: Vec<Vec2>, u: f64) -> SimState {
        let n = atoms.len();
        let m = HybridMeasure::from_parts(grid, atoms, rho, u, n).unwrap().normalized().unwrap();
        SimState::new(m, None, kern).unwrap()
    }

    #[test]
    fn zero_velocity_leaves_density_untouched() {
        let g = DomainGrid::square(0.0, 1.0, 20).unwrap();
        let rho: Vec<f64> = (0..g.len()).map(|k| (k % 5) as f64).collect();
        let mut r = rho.clone();
        let upd = upwind_update(&g, &mut r, &vec![Vec2::ZERO; g.len()], 0.1, 0.0).unwrap();
        assert_eq!(r, rho);
        assert_eq!(upd.outflow, 0.0);
    }

    #[test]
    fn uniform_translation_moves_the_center_of_mass() {
        let g = DomainGrid::square(0.0, 2.0, 100).unwrap();
        let mut rho = gaussian_density(&g, Vec2::new(0.8, 1.0), 0.1);
        let a = Vec2::new(0.5, 0.0);
        let v = vec![a; g.len()];
        let centroid = |r: &[f64]| {
            let mut c = Vec2::ZERO;
            for (k, val) in r.iter().enumerate() {
                c += g.center_of(k) * *val;
            }
            c * (1.0 / r.iter().sum::<f64>())
        };
        let c0 = centroid(&rho);
        let dt = 0.02;
        let steps = 20;
        for _ in 0..steps {
            let upd = upwind_update(&g, &mut rho, &v, dt, a.norm()).unwrap();
            assert!(upd.defect < 1e-12);
        }
        let c1 = centroid(&rho);
        let moved = c1 - c0;
        assert!((moved.x - a.x * dt * steps as f64).abs() < 1e-10);
        assert!(moved.y.abs() < 1e-12);
        assert!((g.integrate(&rho) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = DomainGrid::new_1d(0.0, 1.0, 10).unwrap();
        let mut rho = vec![1.0; 10];
        let r = upwind_update(&g, &mut rho, &vec![Vec2::along_x(1.0); 10], 0.2, 1.0);
        assert!(matches!(r, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn boundary_outflow_is_accounted() {
        let g = DomainGrid::new_1d(0.0, 1.0, 10).unwrap();
        let mut rho = vec![1.0; 10];
        let upd = upwind_update(&g, &mut rho, &vec![Vec2::along_x(1.0); 10], 0.05, 1.0).unwrap();
        assert!((upd.outflow - 0.05).abs() < 1e-15);
        assert!(upd.defect < 1e-15);
        assert!((g.integrate(&rho) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn single_atom_does_not_move() {
        let g = DomainGrid::square(0.0, 4.0, 20).unwrap();
        let rho = vec![1.0; g.len()];
        let s = one_d_state(rho, g, InteractionKernel::aggregation(0.3).unwrap(), vec![Vec2::new(1.3, 2.2)], 0.0);
        assert_eq!(atom_step(&s, Vec2::ZERO, 0.1), vec![Vec2::new(1.3, 2.2)]);
    }

    #[test]
    fn two_atoms_contract_exponentially() {
        let g = DomainGrid::square(0.0, 4.0, 20).unwrap();
        let rho = vec![1.0; g.len()];
        let x1 = Vec2::new(2.0, 2.0);
        let x2 = Vec2::new(2.2, 2.05);
        let s = one_d_state(rho, g, InteractionKernel::aggregation(0.3).unwrap(), vec![x1, x2], 0.0);
        let control = StepControl { dt_max: 1e-3, cfl: 0.5, t_max: 1.0 };
        let mut sim = Simulation::new(s, control, 0.0, Vec2::ZERO).unwrap();
        sim.run_until(1.0, &[], |_| Ok(())).unwrap();
        let a = sim.state().measure.atoms();
        let sep = a[0] - a[1];
        let expected = (x1 - x2) * exp(-2.0);
        assert!((sep - expected).norm() / expected.norm() < 1e-2);
        // pairwise antisymmetry keeps the center of mass fixed
        let com = (a[0] + a[1]) * 0.5;
        assert!((com - (x1 + x2) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn run_until_hits_snapshot_times_exactly() {
        let g = DomainGrid::new_1d(-2.0, 2.0, 80).unwrap();
        let rho: Vec<f64> = g.centers().into_iter().map(|p| exp(-p.x * p.x * 4.0)).collect();
        let s = one_d_state(rho, g, InteractionKernel::aggregation(0.4).unwrap(), vec![Vec2::ZERO], 1.0);
        let mut sim = Simulation::new(s, StepControl { dt_max: 0.07, cfl: 0.5, t_max: 1.0 }, 0.0, Vec2::ZERO).unwrap();
        let mut seen = Vec::new();
        sim.run_until(1.0, &[0.0, 0.25, 0.5, 1.0], |s| {
            seen.push(s.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0.0, 0.25, 0.5, 1.0]);
        assert!((sim.state().measure.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetric_density_stays_symmetric() {
        let g = DomainGrid::new_1d(-1.0, 1.0, 100).unwrap();
        let rho: Vec<f64> = g
            .centers()
            .into_iter()
            .map(|p| if p.x.abs() < 0.5 { 1.0 + 0.3 * p.x * p.x } else { 0.0 })
            .collect();
        let s = one_d_state(rho, g, InteractionKernel::aggregation(0.2).unwrap(), vec![Vec2::ZERO], 1.0);
        let mut sim = Simulation::new(s, StepControl { dt_max: 0.01, cfl: 0.5, t_max: 0.5 }, 0.0, Vec2::ZERO).unwrap();
        sim.run_until(0.5, &[], |_| Ok(())).unwrap();
        let r = sim.state().measure.density();
        for i in 0..50 {
            assert!((r[i] - r[99 - i]).abs() <= 1e-12 * (1.0 + r[i]), "{i}: {} {}", r[i], r[99 - i]);
        }
    }

    #[test]
    fn motility_substep_conserves_mass_and_spreads() {
        // the implicit resolvent has exponential tails, so the boundary must
        // sit many decay lengths away
        let g = DomainGrid::new_1d(-6.0, 6.0, 240).unwrap();
        let mut rho = gaussian_density(&g, Vec2::ZERO, 0.2);
        let var = |r: &[f64]| g.centers().iter().zip(r).map(|(p, v)| p.x * p.x * v).sum::<f64>() * g.dx();
        let v0 = var(&rho);
        diffuse_density(&g, &mut rho, 0.5, 0.1).unwrap();
        assert!((g.integrate(&rho) - 1.0).abs() < 1e-12);
        assert!((var(&rho) - (v0 + 2.0 * 0.5 * 0.1)).abs() < 1e-9);
    }
}

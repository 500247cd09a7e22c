//! Interacting particle system with Brownian motility.
//!
//! Each realization holds `N` particles that follow
//!
//! ```text
//! dX^i = (T(X^i) + sum_j K(X^i, X^j)) dt + sqrt(2 sigma) dW^i
//! ```
//!
//! integrated with Euler-Maruyama (strong order 1/2). Realizations are
//! independent. Gaussian increments come from a counter-addressed ChaCha
//! stream keyed by `(seed, realization, step, particle)`, so results do not
//! depend on how realizations are scheduled.
//!
//! The module also provides exact one-dimensional Wasserstein-1 distances,
//! a sliced variant for two dimensions, and a comparison of the particle
//! ensemble against the Eulerian solver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::grid::DomainGrid;
use crate::interaction::{discrete_sum, InteractionKernel};
use crate::math::{cos, floor, ln, sin, sqrt, Vec2};
use crate::measure::HybridMeasure;
use crate::par::map_indices;
use crate::scenario::StepControl;
use crate::transport::{SimState, Simulation};
use crate::{Error, Result};

/// Standard normal pairs from one ChaCha stream (Box-Muller).
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    /// `word_offset` counts 32-bit words; one pair consumes four.
    pub fn new(seed: u64, stream: u64, word_offset: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_offset);
        NormalStream { rng }
    }

    pub fn next_pair(&mut self) -> Vec2 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * SCALE;
        let u2 = (b >> 11) as f64 * SCALE;
        let r = sqrt(-2.0 * ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        Vec2::new(r * cos(theta), r * sin(theta))
    }
}

const WORDS_PER_PAIR: u128 = 4;

/// External drift felt by the particles.
#[derive(Debug, Clone, PartialEq)]
pub enum TaxisSource {
    /// The same vector everywhere.
    Uniform(Vec2),
    /// A frozen field on a grid, interpolated like the Eulerian solver does,
    /// plus a uniform drift.
    Field { grid: DomainGrid, field: Vec<Vec2>, drift: Vec2 },
}

impl TaxisSource {
    fn at(&self, x: Vec2) -> Vec2 {
        match self {
            TaxisSource::Uniform(v) => *v,
            TaxisSource::Field { grid, field, drift } => {
                let mut t = Vec2::ZERO;
                for (k, w) in grid.interpolation_stencil(x) {
                    t += field[k] * w;
                }
                t + *drift
            }
        }
    }
}

/// `M` independent copies of an `N`-particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    domain: DomainGrid,
    initial: Vec<Vec<Vec2>>,
    positions: Vec<Vec<Vec2>>,
    sigma: f64,
    seed: u64,
    steps: u64,
}

impl ParticleEnsemble {
    /// All realizations start from the same configuration. Particles are kept
    /// inside the domain of `domain`.
    pub fn new(domain: DomainGrid, start: Vec<Vec2>, realizations: usize, sigma: f64, seed: u64) -> Result<Self> {
        if realizations == 0 || start.is_empty() {
            return Err(Error::InvalidConfig("an ensemble needs M >= 1 and N >= 1".into()));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma={sigma} must be finite and >= 0")));
        }
        if let Some(p) = start.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite position {p:?}")));
        }
        let positions = vec![start; realizations];
        Ok(ParticleEnsemble { domain, initial: positions.clone(), positions, sigma, seed, steps: 0 })
    }

    /// Realizations with their own starting configurations.
    pub fn from_realizations(domain: DomainGrid, start: Vec<Vec<Vec2>>, sigma: f64, seed: u64) -> Result<Self> {
        let n = start.first().map_or(0, Vec::len);
        if start.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidConfig("all realizations need the same particle count".into()));
        }
        let mut ens = Self::new(domain, vec![Vec2::ZERO; n.max(1)], start.len().max(1), sigma, seed)?;
        if n == 0 {
            return Err(Error::InvalidConfig("an ensemble needs M >= 1 and N >= 1".into()));
        }
        if start.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite starting position".into()));
        }
        ens.initial = start.clone();
        ens.positions = start;
        Ok(ens)
    }

    pub fn realizations(&self) -> &[Vec<Vec2>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn particles(&self) -> usize {
        self.positions[0].len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn domain(&self) -> &DomainGrid {
        &self.domain
    }

    /// Mean of `|X_t - X_0|^2` over all particles and realizations.
    pub fn mean_squared_displacement(&self) -> f64 {
        let mut s = 0.0;
        for (now, start) in self.positions.iter().zip(&self.initial) {
            for (a, b) in now.iter().zip(start) {
                s += (*a - *b).norm_sq();
            }
        }
        s / (self.len() * self.particles()) as f64
    }

    /// All positions of all realizations.
    pub fn samples(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.positions.iter().flatten().copied()
    }

    /// The Brownian increment (unit variance per component) of a particle at
    /// a step, as used by [`sde_step`].
    pub fn gaussian(&self, realization: usize, step: u64, particle: usize) -> Vec2 {
        let word = (step as u128 * self.particles() as u128 + particle as u128) * WORDS_PER_PAIR;
        NormalStream::new(self.seed, realization as u64, word).next_pair()
    }
}

/// Velocity of one particle, summing the kernel over every particle of its
/// realization (itself included).
fn particle_velocity(x: Vec2, others: &[Vec2], kern: &InteractionKernel, taxis: &TaxisSource) -> Vec2 {
    let t = taxis.at(x);
    let s = discrete_sum(x, others, kern, t);
    let mut v = t;
    v += s * 1.0;
    v
}

/// One Euler-Maruyama step of every realization. In one dimension only the
/// first noise component is used.
pub fn sde_step(ens: &mut ParticleEnsemble, kern: &InteractionKernel, taxis: &TaxisSource, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("dt={dt} must be positive")));
    }
    let amp = sqrt(2.0 * ens.sigma * dt);
    let one_d = ens.domain.dim() == 1;
    let ens_ref = &*ens;
    let next = map_indices(ens.len(), |r| {
        let xs = &ens_ref.positions[r];
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let v = particle_velocity(x, xs, kern, taxis);
                let mut y = x + v * dt;
                if amp > 0.0 {
                    let mut xi = ens_ref.gaussian(r, ens_ref.steps, i);
                    if one_d {
                        xi.y = 0.0;
                    }
                    y = y + xi * amp;
                }
                ens_ref.domain.clamp(y)
            })
            .collect::<Vec<Vec2>>()
    });
    ens.positions = next;
    ens.steps += 1;
    Ok(())
}

/// Normalized histogram of all particle positions. Points outside the grid
/// are counted in the nearest cell.
pub fn empirical_density(ens: &ParticleEnsemble, grid: &DomainGrid) -> Vec<f64> {
    let mut hist = vec![0.0; grid.len()];
    let mut count = 0usize;
    for p in ens.samples() {
        if let Some((i, j)) = grid.locate(grid.clamp(p)) {
            hist[grid.index(i, j)] += 1.0;
            count += 1;
        }
    }
    if count > 0 {
        let w = 1.0 / (count as f64 * grid.cell_volume());
        for h in &mut hist {
            *h *= w;
        }
    }
    hist
}

/// A probability distribution on the line.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution1d {
    /// Weighted points, sorted, with cumulative weights normalized to one.
    Points { x: Vec<f64>, cum: Vec<f64> },
    /// Piecewise constant density on uniform cells starting at `lower`.
    Histogram { lower: f64, width: f64, cum: Vec<f64> },
}

impl Distribution1d {
    /// Equally weighted samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let w = vec![1.0; samples.len()];
        Self::from_weighted(samples, &w)
    }

    pub fn from_weighted(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidMeasure("need matching, nonempty points and weights".into()));
        }
        if points.iter().any(|x| !x.is_finite()) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("points must be finite and weights nonnegative".into()));
        }
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroDensity);
        }
        let mut x = Vec::with_capacity(pairs.len());
        let mut cum = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (p, w) in pairs {
            acc += w / total;
            x.push(p);
            cum.push(acc);
        }
        Ok(Distribution1d::Points { x, cum })
    }

    /// Cell masses on `[lower, lower + width * masses.len())`.
    pub fn from_histogram(lower: f64, width: f64, masses: &[f64]) -> Result<Self> {
        if masses.is_empty() || !(width > 0.0) {
            return Err(Error::InvalidMeasure("histogram needs cells of positive width".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidMeasure("histogram masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroDensity);
        }
        let mut acc = 0.0;
        let cum = masses
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        Ok(Distribution1d::Histogram { lower, width, cum })
    }

    /// Density of a one-dimensional grid.
    pub fn from_grid(grid: &DomainGrid, density: &[f64]) -> Result<Self> {
        Self::from_histogram(grid.lower().x, grid.dx(), density)
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Distribution1d::Points { x, .. } => out.extend_from_slice(x),
            Distribution1d::Histogram { lower, width, cum } => {
                out.extend((0..=cum.len()).map(|k| lower + k as f64 * width));
            }
        }
    }

    /// CDF value (right-continuous).
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            Distribution1d::Points { x, cum } => {
                let k = x.partition_point(|p| *p <= t);
                if k == 0 {
                    0.0
                } else {
                    cum[k - 1]
                }
            }
            Distribution1d::Histogram { lower, width, cum } => {
                let s = (t - lower) / width;
                if s <= 0.0 {
                    return 0.0;
                }
                let k = floor(s) as usize;
                if k >= cum.len() {
                    return 1.0;
                }
                let before = if k == 0 { 0.0 } else { cum[k - 1] };
                before + (cum[k] - before) * (s - k as f64)
            }
        }
    }

    /// CDF limits just inside `(p, q)`, where the CDF has no breakpoint.
    fn cdf_inside(&self, p: f64, q: f64) -> (f64, f64) {
        match self {
            Distribution1d::Points { .. } => {
                let v = self.cdf(p);
                (v, v)
            }
            Distribution1d::Histogram { .. } => (self.cdf(p), self.cdf(q)),
        }
    }
}

/// Exact `integral |F_a - F_b|` between two distributions on the line.
pub fn wasserstein1_1d(a: &Distribution1d, b: &Distribution1d) -> f64 {
    let mut bp = Vec::new();
    a.breakpoints(&mut bp);
    b.breakpoints(&mut bp);
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    let mut total = 0.0;
    for w in bp.windows(2) {
        let (p, q) = (w[0], w[1]);
        let len = q - p;
        let (fa0, fa1) = a.cdf_inside(p, q);
        let (fb0, fb1) = b.cdf_inside(p, q);
        let (d0, d1) = (fa0 - fb0, fa1 - fb1);
        total += if d0 * d1 >= 0.0 {
            0.5 * len * (d0.abs() + d1.abs())
        } else {
            0.5 * len * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
        };
    }
    total
}

/// Number of projection directions of [`sliced_wasserstein1`].
pub const SLICED_DIRECTIONS: usize = 64;

/// Average of the one-dimensional distances between the projections of two
/// weighted point clouds on equally spaced directions of the half circle.
pub fn sliced_wasserstein1(a: &[(Vec2, f64)], b: &[(Vec2, f64)]) -> Result<f64> {
    let mut sum = 0.0;
    for k in 0..SLICED_DIRECTIONS {
        let angle = core::f64::consts::PI * k as f64 / SLICED_DIRECTIONS as f64;
        let dir = Vec2::new(cos(angle), sin(angle));
        let project = |cloud: &[(Vec2, f64)]| -> Result<Distribution1d> {
            let x: Vec<f64> = cloud.iter().map(|(p, _)| p.dot(dir)).collect();
            let w: Vec<f64> = cloud.iter().map(|(_, w)| *w).collect();
            Distribution1d::from_weighted(&x, &w)
        };
        sum += wasserstein1_1d(&project(a)?, &project(b)?);
    }
    Ok(sum / SLICED_DIRECTIONS as f64)
}

/// Cell centers of a grid density weighted by cell mass.
pub fn weighted_cells(grid: &DomainGrid, density: &[f64]) -> Vec<(Vec2, f64)> {
    let vol = grid.cell_volume();
    density
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(k, r)| (grid.center_of(k), r * vol))
        .collect()
}

/// Setup of a particle-versus-Eulerian comparison.
///
/// With `width == 0` all particles start at `start` and the Eulerian density
/// is the indicator of the cell containing it. Otherwise particles are drawn
/// independently from the normal law with that standard deviation (per
/// component) and the Eulerian density is the matching Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub grid: DomainGrid,
    pub n: usize,
    pub kernel: InteractionKernel,
    pub sigma: f64,
    pub drift: Vec2,
    pub start: Vec2,
    pub width: f64,
    pub dt: f64,
    /// Report times in increasing order.
    pub times: Vec<f64>,
    pub seed: u64,
    /// Independent repetitions per ensemble size; the median distance is
    /// reported.
    pub runs: usize,
}

impl ValidationConfig {
    /// Heat equation from a point: no interaction, no drift.
    pub fn heat(sigma: f64, seed: u64) -> Result<Self> {
        Ok(ValidationConfig {
            grid: DomainGrid::new_1d(-6.0, 6.0, 600)?,
            n: 1,
            kernel: InteractionKernel::zero(0.1)?,
            sigma,
            drift: Vec2::ZERO,
            start: Vec2::ZERO,
            width: 0.0,
            dt: 0.01,
            times: vec![1.0],
            seed,
            runs: 3,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRow {
    pub t: f64,
    pub m: usize,
    /// Median over runs of the distance between ensemble and Eulerian laws.
    pub w1: f64,
    /// Mean squared displacement averaged over runs.
    pub msd: f64,
}

/// Densities of the Eulerian solver at the report times.
pub fn eulerian_reference(cfg: &ValidationConfig) -> Result<Vec<Vec<f64>>> {
    let g = &cfg.grid;
    let (i, j) = g
        .locate(cfg.start)
        .ok_or_else(|| Error::InvalidConfig(format!("start {:?} outside the domain", cfg.start)))?;
    let rho = if cfg.width > 0.0 {
        crate::scenario::gaussian_density(g, cfg.start, cfg.width)
    } else {
        let mut rho = vec![0.0; g.len()];
        rho[g.index(i, j)] = 1.0 / g.cell_volume();
        rho
    };
    let m = HybridMeasure::from_parts(g.clone(), vec![cfg.start; cfg.n], rho, 1.0, cfg.n)?;
    let state = SimState::new(m, None, cfg.kernel.clone())?;
    let control = StepControl { dt_max: cfg.dt, cfl: 0.5, t_max: cfg.times.last().copied().unwrap_or(0.0) };
    let mut sim = Simulation::new(state, control, cfg.sigma, cfg.drift)?;
    let mut out = Vec::with_capacity(cfg.times.len());
    let end = control.t_max;
    sim.run_until(end, &cfg.times, |s| {
        out.push(s.measure.density().to_vec());
        Ok(())
    })?;
    Ok(out)
}

/// Streams at or above this id draw initial positions; lower ids are
/// realization noise.
const INITIAL_STREAM_BASE: u64 = 1 << 63;

fn initial_positions(cfg: &ValidationConfig, m: usize, seed: u64) -> Vec<Vec<Vec2>> {
    if cfg.width == 0.0 {
        return vec![vec![cfg.start; cfg.n]; m];
    }
    let one_d = cfg.grid.dim() == 1;
    (0..m)
        .map(|r| {
            let mut s = NormalStream::new(seed, INITIAL_STREAM_BASE + r as u64, 0);
            (0..cfg.n)
                .map(|_| {
                    let mut xi = s.next_pair();
                    if one_d {
                        xi.y = 0.0;
                    }
                    cfg.grid.clamp(cfg.start + xi * cfg.width)
                })
                .collect()
        })
        .collect()
}

fn distance(grid: &DomainGrid, ens: &ParticleEnsemble, rho: &[f64]) -> Result<f64> {
    if grid.dim() == 1 {
        let xs: Vec<f64> = ens.samples().map(|p| p.x).collect();
        Ok(wasserstein1_1d(&Distribution1d::from_samples(&xs)?, &Distribution1d::from_grid(grid, rho)?))
    } else {
        let pts: Vec<(Vec2, f64)> = ens.samples().map(|p| (p, 1.0)).collect();
        sliced_wasserstein1(&pts, &weighted_cells(grid, rho))
    }
}

/// Distance between `m`-realization ensembles and the Eulerian solution at
/// every report time, given the precomputed reference densities.
pub fn validate_ensemble(cfg: &ValidationConfig, reference: &[Vec<f64>], m: usize) -> Result<Vec<ValidationRow>> {
    let runs = cfg.runs.max(1);
    let mut w1 = vec![Vec::with_capacity(runs); cfg.times.len()];
    let mut msd = vec![0.0; cfg.times.len()];
    let taxis = TaxisSource::Uniform(cfg.drift);
    for run in 0..runs {
        let seed = cfg.seed.wrapping_add(run as u64);
        let mut ens = ParticleEnsemble::from_realizations(cfg.grid.clone(), initial_positions(cfg, m, seed), cfg.sigma, seed)?;
        let mut t = 0.0;
        for (k, &target) in cfg.times.iter().enumerate() {
            while t < target - 1e-12 * target.max(1.0) {
                let dt = cfg.dt.min(target - t);
                sde_step(&mut ens, &cfg.kernel, &taxis, dt)?;
                t += dt;
            }
            w1[k].push(distance(&cfg.grid, &ens, &reference[k])?);
            msd[k] += ens.mean_squared_displacement() / runs as f64;
        }
    }
    Ok(cfg
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| ValidationRow { t, m, w1: median(&mut w1[k]), msd: msd[k] })
        .collect())
}

/// [`validate_ensemble`] for several ensemble sizes.
pub fn validate_against_pde(cfg: &ValidationConfig, ensemble_sizes: &[usize]) -> Result<Vec<ValidationRow>> {
    let reference = eulerian_reference(cfg)?;
    let mut rows = Vec::new();
    for &m in ensemble_sizes {
        rows.extend(validate_ensemble(cfg, &reference, m)?);
    }
    Ok(rows)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

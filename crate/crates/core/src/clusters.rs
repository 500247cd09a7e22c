//! Counting aggregates in a hybrid measure.
//!
//! Density clusters are the 4-connected components of the super-level set
//! `{rho >= theta * max rho}`. Atoms join a density cluster when they sit in
//! one of its cells or within the merge radius of its centroid, and join each
//! other by single linkage within the merge radius. A cluster is *main* when
//! it carries at least `main_fraction` of the total mass. The density is
//! normalized first, so rescaling it does not change the report.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::Vec2;
use crate::measure::HybridMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Level-set threshold relative to the maximum density.
    pub theta: f64,
    /// Merge radius; `None` means two cell widths.
    pub merge_radius: Option<f64>,
    /// Mass fraction separating main from secondary clusters.
    pub main_fraction: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { theta: 0.1, merge_radius: None, main_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub centroid: Vec2,
    /// Share of the total mass `N`, with the density part normalized.
    pub mass_fraction: f64,
    pub atoms: usize,
    /// Number of grid cells of the density component (0 for atom-only).
    pub cells: usize,
    pub main: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// Sorted by decreasing mass.
    pub clusters: Vec<Cluster>,
    pub main: usize,
    pub secondary: usize,
    /// Atoms that ended up in secondary clusters.
    pub atoms_in_secondary: usize,
}

impl ClusterReport {
    pub fn main_clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.main)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Labels 4-connected components of `mask`; returns the label per cell and
/// the number of components.
fn label_components(mask: &[bool], nx: usize, ny: usize) -> (Vec<Option<usize>>, usize) {
    let mut label = vec![None; mask.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start].is_some() {
            continue;
        }
        label[start] = Some(count);
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut visit = |n: usize| {
                if mask[n] && label[n].is_none() {
                    label[n] = Some(count);
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - nx);
            }
            if j + 1 < ny {
                visit(k + nx);
            }
        }
        count += 1;
    }
    (label, count)
}

pub fn detect_clusters(m: &HybridMeasure, params: &ClusterParams) -> ClusterReport {
    let grid = m.grid();
    let u = m.u();
    let nf = m.n() as f64;
    let vol = grid.cell_volume();
    let merge = params.merge_radius.unwrap_or(2.0 * grid.dx());

    // density components
    let rho = m.density();
    let rho_max = m.max_density();
    let (label, n_comp) = if u > 0.0 && rho_max > 0.0 {
        let level = params.theta * rho_max;
        let mask: Vec<bool> = rho.iter().map(|r| *r >= level && *r > 0.0).collect();
        label_components(&mask, grid.nx(), grid.ny())
    } else {
        (vec![None; rho.len()], 0)
    };
    let mut comp_mass = vec![0.0; n_comp];
    let mut comp_moment = vec![Vec2::ZERO; n_comp];
    let mut comp_cells = vec![0usize; n_comp];
    let integral = m.density_integral();
    let density_weight = if integral > 0.0 { u * nf * vol / integral } else { 0.0 };
    for (k, l) in label.iter().enumerate() {
        if let Some(c) = *l {
            let w = density_weight * rho[k];
            comp_mass[c] += w;
            comp_moment[c] += grid.center_of(k) * w;
            comp_cells[c] += 1;
        }
    }
    let comp_centroid: Vec<Vec2> = comp_moment
        .iter()
        .zip(&comp_mass)
        .map(|(s, w)| if *w > 0.0 { *s * (1.0 / w) } else { Vec2::ZERO })
        .collect();

    // atoms carry no mass when u = 1
    let atoms: &[Vec2] = if u < 1.0 { m.atoms() } else { &[] };
    let atom_mass = 1.0 - u;
    let mut uf = UnionFind::new(n_comp + atoms.len());
    let r2 = merge * merge;
    for (a, &p) in atoms.iter().enumerate() {
        let node = n_comp + a;
        if let Some((i, j)) = grid.locate(p) {
            if let Some(c) = label[grid.index(i, j)] {
                uf.union(node, c);
            }
        }
        for (c, &centroid) in comp_centroid.iter().enumerate() {
            if (p - centroid).norm_sq() <= r2 {
                uf.union(node, c);
            }
        }
        for (b, &q) in atoms.iter().enumerate().skip(a + 1) {
            if (p - q).norm_sq() <= r2 {
                uf.union(node, n_comp + b);
            }
        }
    }

    let total = nf;
    let nodes = n_comp + atoms.len();
    let mut mass = vec![0.0; nodes];
    let mut moment = vec![Vec2::ZERO; nodes];
    let mut atom_count = vec![0usize; nodes];
    let mut cells = vec![0usize; nodes];
    for c in 0..n_comp {
        let r = uf.find(c);
        mass[r] += comp_mass[c];
        moment[r] += comp_moment[c];
        cells[r] += comp_cells[c];
    }
    for (a, &p) in atoms.iter().enumerate() {
        let r = uf.find(n_comp + a);
        mass[r] += atom_mass;
        moment[r] += p * atom_mass;
        atom_count[r] += 1;
    }

    let mut clusters: Vec<Cluster> = (0..nodes)
        .filter(|&k| uf.find(k) == k && mass[k] > 0.0)
        .map(|k| {
            let fraction = if total > 0.0 { mass[k] / total } else { 0.0 };
            Cluster {
                centroid: moment[k] * (1.0 / mass[k]),
                mass_fraction: fraction,
                atoms: atom_count[k],
                cells: cells[k],
                main: fraction >= params.main_fraction,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.mass_fraction
            .total_cmp(&a.mass_fraction)
            .then(a.centroid.x.total_cmp(&b.centroid.x))
            .then(a.centroid.y.total_cmp(&b.centroid.y))
    });
    let main = clusters.iter().filter(|c| c.main).count();
    let atoms_in_secondary = clusters.iter().filter(|c| !c.main).map(|c| c.atoms).sum();
    ClusterReport { secondary: clusters.len() - main, main, clusters, atoms_in_secondary }
}

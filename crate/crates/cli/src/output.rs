//! CSV artifacts: snapshots, chemical fields and the run summary.
//!
//! All numbers are written with Rust's shortest round-trip formatting, so a
//! snapshot read back reproduces the state bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use colony_core::chemical::ChemicalField;
use colony_core::clusters::ClusterReport;
use colony_core::{DomainGrid, HybridMeasure, Vec2};

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:.3}.csv")
}

pub fn chemical_name(t: f64) -> String {
    format!("c_t{t:.3}.csv")
}

fn pair(v: Vec2) -> String {
    format!("{:?},{:?}", v.x, v.y)
}

/// Header line, the atom table and the density table in storage order
/// (`i` fastest).
pub fn snapshot_csv(t: f64, m: &HybridMeasure) -> String {
    let g = m.grid();
    let mut s = String::with_capacity(32 * (g.len() + m.atoms().len()));
    let _ = writeln!(
        s,
        "# t={t:?} u={:?} N={} dim={} lower={} upper={} cells={},{}",
        m.u(),
        m.n(),
        g.dim(),
        pair(g.lower()),
        pair(g.upper()),
        g.nx(),
        g.ny()
    );
    s.push_str("atoms: h,x,y\n");
    for (h, a) in m.atoms().iter().enumerate() {
        let _ = writeln!(s, "{h},{:?},{:?}", a.x, a.y);
    }
    s.push_str("density: i,j,value\n");
    for (k, v) in m.density().iter().enumerate() {
        let (i, j) = g.coords(k);
        let _ = writeln!(s, "{i},{j},{v:?}");
    }
    s
}

pub fn chemical_csv(t: f64, c: &ChemicalField) -> String {
    let g = c.grid();
    let mut s = String::with_capacity(32 * g.len());
    let _ = writeln!(s, "# t={t:?}");
    s.push_str("i,j,value\n");
    for (k, v) in c.concentration().iter().enumerate() {
        let (i, j) = g.coords(k);
        let _ = writeln!(s, "{i},{j},{v:?}");
    }
    s
}

fn header_field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| anyhow!("snapshot header lacks `{key}`"))
}

fn parse_pair(s: &str) -> Result<Vec2> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("expected `x,y`, got `{s}`"))?;
    Ok(Vec2::new(a.parse()?, b.parse()?))
}

/// Reads a snapshot written by [`snapshot_csv`].
pub fn read_snapshot(text: &str) -> Result<(f64, HybridMeasure)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| anyhow!("empty snapshot"))?;
    let header = header.strip_prefix('#').ok_or_else(|| anyhow!("line 1: missing `#` header"))?;
    let t: f64 = header_field(header, "t")?.parse()?;
    let u: f64 = header_field(header, "u")?.parse()?;
    let n: usize = header_field(header, "N")?.parse()?;
    let dim: usize = header_field(header, "dim")?.parse()?;
    let lower = parse_pair(header_field(header, "lower")?)?;
    let upper = parse_pair(header_field(header, "upper")?)?;
    let cells = header_field(header, "cells")?;
    let (nx, ny) = cells.split_once(',').ok_or_else(|| anyhow!("bad cells `{cells}`"))?;
    let (nx, ny): (usize, usize) = (nx.parse()?, ny.parse()?);
    let grid = if dim == 1 {
        DomainGrid::new_1d(lower.x, upper.x, nx)
    } else {
        DomainGrid::new_2d(lower, upper, [nx, ny])
    }
    .map_err(|e| anyhow!("snapshot grid: {e}"))?;

    let mut atoms = Vec::new();
    let mut density = Vec::with_capacity(grid.len());
    let mut section = "";
    for (k, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("atoms:") {
            section = "atoms";
            continue;
        }
        if line.starts_with("density:") {
            section = "density";
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("line {}: expected three fields", k + 1);
        }
        let bad = |e: std::num::ParseFloatError| anyhow!("line {}: {e}", k + 1);
        match section {
            "atoms" => atoms.push(Vec2::new(fields[1].parse().map_err(bad)?, fields[2].parse().map_err(bad)?)),
            "density" => density.push(fields[2].parse().map_err(bad)?),
            _ => bail!("line {}: data before a section header", k + 1),
        }
    }
    let m = HybridMeasure::from_parts(grid, atoms, density, u, n).map_err(|e| anyhow!("snapshot measure: {e}"))?;
    Ok((t, m))
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub time: f64,
    pub total_probability: f64,
    pub atom_bbox: [f64; 4],
    pub main: usize,
    pub secondary: usize,
    pub max_density: f64,
    pub max_displacement: f64,
    pub atoms_in_secondary: usize,
    pub largest_fraction: f64,
}

impl SummaryRow {
    pub fn new(t: f64, m: &HybridMeasure, start: &[Vec2], report: &ClusterReport) -> Self {
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for a in m.atoms() {
            bbox = [bbox[0].min(a.x), bbox[1].min(a.y), bbox[2].max(a.x), bbox[3].max(a.y)];
        }
        let max_displacement = m.atoms().iter().zip(start).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        SummaryRow {
            time: t,
            total_probability: m.total_probability(),
            atom_bbox: bbox,
            main: report.main,
            secondary: report.secondary,
            max_density: m.max_density(),
            max_displacement,
            atoms_in_secondary: report.atoms_in_secondary,
            largest_fraction: report.clusters.first().map_or(0.0, |c| c.mass_fraction),
        }
    }
}

pub const SUMMARY_HEADER: &str = "time,total_probability,atom_bbox,n_clusters_main,n_clusters_secondary,max_density,max_displacement,atoms_in_secondary,largest_cluster_fraction";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let b = r.atom_bbox;
        let _ = writeln!(
            s,
            "{:?},{:?},{:?};{:?};{:?};{:?},{},{},{:?},{:?},{},{:?}",
            r.time,
            r.total_probability,
            b[0],
            b[1],
            b[2],
            b[3],
            r.main,
            r.secondary,
            r.max_density,
            r.max_displacement,
            r.atoms_in_secondary,
            r.largest_fraction
        );
    }
    s
}

pub fn cluster_csv(report: &ClusterReport) -> String {
    let mut s = String::from("centroid_x,centroid_y,mass_fraction,atoms,cells,kind\n");
    for c in &report.clusters {
        let kind = if c.main { "main" } else { "secondary" };
        let _ = writeln!(s, "{:?},{:?},{:?},{},{},{kind}", c.centroid.x, c.centroid.y, c.mass_fraction, c.atoms, c.cells);
    }
    s
}

/// Writes through a temporary file and renames, so readers never see a
/// truncated file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("csv.partial");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

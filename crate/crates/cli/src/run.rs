//! The three computational verbs: experiment runs, local-model tables and
//! particle validation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use colony_core::clusters::{detect_clusters, ClusterReport};
use colony_core::local_models::{
    anisotropic_coefficients, convergence_study, isotropic_coefficients, ConvergenceSettings, KernelDerivatives,
    LocalCoefficients, Side,
};
use colony_core::particle_mc::{eulerian_reference, validate_ensemble, ValidationConfig, ValidationRow};
use colony_core::scenario::InitialData;
use colony_core::transport::Simulation;
use colony_core::{Error as CoreError, InteractionKernel, KernelProfile, Neighborhood, Vec2};

use crate::config::RunConfig;
use crate::output::{chemical_csv, chemical_name, snapshot_csv, snapshot_name, summary_csv, write_atomic, SummaryRow};

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub final_report: ClusterReport,
    pub steps: usize,
    /// Worst per-step density conservation defect.
    pub max_mass_defect: f64,
    /// Worst deviation of the total probability from its initial value.
    pub max_probability_drift: f64,
    pub outflow: f64,
    pub runtime_s: f64,
}

/// Runs a configuration, writing snapshots, chemical fields and finally
/// `summary.csv` into `out_dir`. The summary is only written when the whole
/// run succeeds. If the solver produces non-finite values the last finite
/// state is dumped to `nan_dump.csv`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let started = Instant::now();
    let mut sim = Simulation::from_config(&cfg.sim).map_err(|e| anyhow!("setting up the simulation: {e}"))?;
    let start = sim.state().measure.atoms().to_vec();
    let p0 = sim.state().measure.total_probability();

    let mut rows = Vec::new();
    let mut last_report = None;
    let mut io_error = None;
    let mut drift: f64 = 0.0;
    let t_end = cfg.sim.step.t_max;
    let outcome = sim.run_until(t_end, &cfg.sim.snapshots, |s| {
        let m = &s.measure;
        drift = drift.max((m.total_probability() - p0).abs());
        let report = detect_clusters(m, &cfg.clusters);
        rows.push(SummaryRow::new(s.t, m, &start, &report));
        log::info!("t={:.3} main={} secondary={} max_density={:.4}", s.t, report.main, report.secondary, m.max_density());
        last_report = Some(report);
        let write = || -> Result<()> {
            write_atomic(&out_dir.join(snapshot_name(s.t)), &snapshot_csv(s.t, m))?;
            if let Some(c) = &s.chem {
                write_atomic(&out_dir.join(chemical_name(s.t)), &chemical_csv(s.t, c))?;
            }
            Ok(())
        };
        write().map_err(|e| {
            io_error = Some(e);
            CoreError::InvalidConfig("output failed".into())
        })
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    if let Err(e) = outcome {
        if let CoreError::NonFinite { .. } = e {
            let s = sim.state();
            let dump = out_dir.join("nan_dump.csv");
            write_atomic(&dump, &snapshot_csv(s.t, &s.measure))?;
            log::error!("non-finite state; last finite state written to {}", dump.display());
        }
        return Err(anyhow!("solver failed at t={}: {e}", sim.state().t));
    }
    // the final state is always reported, even if it is not a snapshot time
    let fin = sim.state();
    drift = drift.max((fin.measure.total_probability() - p0).abs());
    let final_report = match (rows.last(), last_report) {
        (Some(r), Some(rep)) if r.time == fin.t => rep,
        _ => {
            let rep = detect_clusters(&fin.measure, &cfg.clusters);
            rows.push(SummaryRow::new(fin.t, &fin.measure, &start, &rep));
            rep
        }
    };
    write_atomic(&out_dir.join("summary.csv"), &summary_csv(&rows))?;
    Ok(RunSummary {
        rows,
        final_report,
        steps: sim.steps(),
        max_mass_defect: sim.max_mass_defect(),
        max_probability_drift: drift,
        outflow: sim.outflow(),
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

/// Kernel description for the local study: `aggregation`, `repulsion` or
/// `poly:c0,c1,...` (coefficients of `k(z) = sum c_n z^n`).
pub fn parse_kernel_spec(spec: &str) -> Result<KernelProfile> {
    match spec {
        "aggregation" => Ok(KernelProfile::Aggregation),
        "repulsion" => Ok(KernelProfile::Repulsion),
        other => {
            let list = other.strip_prefix("poly:").ok_or_else(|| anyhow!("unknown kernel `{other}`"))?;
            let c = list
                .split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad coefficient `{x}`")))
                .collect::<Result<Vec<f64>>>()?;
            Ok(KernelProfile::Polynomial(c))
        }
    }
}

/// `k(0), k'(0), ..., k''''(0)` of a profile along x.
pub fn profile_derivatives(profile: &KernelProfile) -> KernelDerivatives {
    match profile {
        KernelProfile::Aggregation => KernelDerivatives::odd(1.0, 0.0),
        KernelProfile::Repulsion => KernelDerivatives::odd(-1.0, 0.0),
        KernelProfile::Zero => KernelDerivatives::odd(0.0, 0.0),
        KernelProfile::Polynomial(c) => {
            let at = |n: usize, fact: f64| c.get(n).copied().unwrap_or(0.0) * fact;
            KernelDerivatives::new(at(0, 1.0), at(1, 1.0), at(2, 2.0), at(3, 6.0), at(4, 24.0))
        }
    }
}

/// Coefficient table for every radius and regime.
pub fn local_study(profile: &KernelProfile, radii: &[f64], n: usize) -> Vec<(f64, LocalCoefficients)> {
    let kd = profile_derivatives(profile);
    let mut out = Vec::new();
    for &r in radii {
        out.push((r, isotropic_coefficients(&kd, n, r)));
        out.push((r, anisotropic_coefficients(&kd, n, r, Side::Right)));
        out.push((r, anisotropic_coefficients(&kd, n, r, Side::Left)));
    }
    out
}

pub fn local_study_csv(rows: &[(f64, LocalCoefficients)]) -> String {
    let mut s = String::from("regime,R,C0,C1,C2,C3,C4\n");
    for (r, c) in rows {
        let _ = writeln!(s, "{},{r:?},{:?},{:?},{:?},{:?},{:?}", c.label(), c.c[0], c.c[1], c.c[2], c.c[3], c.c[4]);
    }
    s
}

/// Velocity residual and nonlocal-versus-local L1 gap for shrinking radii.
pub fn convergence_csv(profile: &KernelProfile, radii: &[f64], n: usize) -> Result<String> {
    let settings = ConvergenceSettings {
        kernel: InteractionKernel::new(profile.clone(), radii.first().copied().unwrap_or(0.1), Neighborhood::Ball)
            .map_err(|e| anyhow!("{e}"))?,
        n,
        radii: radii.to_vec(),
        t_final: 0.5,
        width: 1.0,
        probe: 0.5,
        cells_per_radius: 16,
        half_width: 6.0,
    };
    let report = convergence_study(&settings).map_err(|e| anyhow!("{e}"))?;
    let mut s = String::from("R,velocity_residual,l1_difference\n");
    for r in &report.rows {
        let _ = writeln!(s, "{:?},{:?},{:?}", r.radius, r.velocity_residual, r.l1_difference);
    }
    let _ = writeln!(s, "# fitted residual order {:.4}", report.residual_order);
    Ok(s)
}

/// A validation row with the wall time of its ensemble size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedRow {
    pub row: ValidationRow,
    pub runtime_s: f64,
}

/// Builds the particle comparison from a run configuration: same grid,
/// kernel, motility and drift; particles start at the initial point (or the
/// domain center), report times are the positive snapshot times.
pub fn validation_from_config(cfg: &RunConfig, runs: usize) -> ValidationConfig {
    let s = &cfg.sim;
    let g = &s.grid;
    let start = match s.init {
        InitialData::Point { center } | InitialData::Gaussian { center, .. } => center,
        InitialData::Lattice { lower, upper } => (lower + upper) * 0.5,
    };
    let start = if g.dim() == 1 { Vec2::along_x(start.x) } else { start };
    let mut times: Vec<f64> = s.snapshots.iter().copied().filter(|t| *t > 0.0).collect();
    if times.is_empty() {
        times.push(s.step.t_max);
    }
    times.sort_by(f64::total_cmp);
    ValidationConfig {
        grid: g.clone(),
        n: s.n,
        kernel: s.kernel.clone(),
        sigma: s.sigma,
        drift: s.drift,
        start,
        width: 0.0,
        dt: s.step.dt_max,
        times,
        seed: s.seed,
        runs,
    }
}

pub fn validate(cfg: &ValidationConfig, sizes: &[usize]) -> Result<Vec<TimedRow>> {
    let reference = eulerian_reference(cfg).map_err(|e| anyhow!("Eulerian reference: {e}"))?;
    let mut out = Vec::new();
    for &m in sizes {
        let t0 = Instant::now();
        let rows = validate_ensemble(cfg, &reference, m).map_err(|e| anyhow!("ensemble of {m}: {e}"))?;
        let runtime_s = t0.elapsed().as_secs_f64();
        log::info!("M={m}: {:.2}s", runtime_s);
        out.extend(rows.into_iter().map(|row| TimedRow { row, runtime_s }));
    }
    Ok(out)
}

pub fn validation_csv(rows: &[TimedRow]) -> String {
    let mut s = String::from("t,M,W1,msd,runtime_s\n");
    for r in rows {
        let _ = writeln!(s, "{:?},{},{:?},{:?},{:.3}", r.row.t, r.row.m, r.row.w1, r.row.msd, r.runtime_s);
    }
    s
}

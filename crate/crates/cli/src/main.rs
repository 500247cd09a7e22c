use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use colony_cli::config::{load_config, RunConfig};
use colony_cli::output::{cluster_csv, read_snapshot, write_atomic};
use colony_cli::run::{
    convergence_csv, local_study, local_study_csv, parse_kernel_spec, run_experiment, validate, validation_csv,
    validation_from_config,
};
use colony_core::clusters::{detect_clusters, ClusterParams};
use colony_core::particle_mc::ValidationConfig;

/// Hybrid discrete/continuous cell aggregation simulator.
#[derive(Parser, Debug)]
#[command(name = "colony", version)]
struct Cli {
    /// Configuration file (flat `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named experiment, e.g. `fig3-u0.1` or `fig4-u1`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (simulate) or CSV file (local-study, validate).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cells per side of the grid.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configuration or preset and write snapshots plus summary.csv.
    Simulate,
    /// Tabulate the local-model coefficients C0..C4.
    LocalStudy {
        /// `aggregation`, `repulsion` or `poly:c0,c1,...`.
        #[arg(long, default_value = "aggregation")]
        kernel: String,
        /// Sensing radii, comma separated.
        #[arg(long = "R", value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
        radii: Vec<f64>,
        /// Number of cells N.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Also write the nonlocal-versus-local convergence table here.
        #[arg(long)]
        convergence: Option<PathBuf>,
    },
    /// Compare particle ensembles with the Eulerian solver.
    Validate {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        ensemble_sizes: Vec<usize>,
        /// Motility used when no configuration is given (heat case).
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Independent runs per ensemble size (median reported).
        #[arg(long, default_value_t = 3)]
        runs: usize,
    },
    /// Detect clusters in a snapshot file.
    Clusters {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        theta: f64,
        #[arg(long, default_value_t = 0.05)]
        main_fraction: f64,
        #[arg(long)]
        merge_radius: Option<f64>,
    },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => bail!("--config and --preset are mutually exclusive"),
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => RunConfig::from_preset(name, cli.grid.unwrap_or(colony_core::scenario::PRESET_CELLS))?,
        (None, None) => bail!("simulate needs --config or --preset"),
    };
    if let (Some(n), Some(_)) = (cli.grid, &cli.config) {
        cfg = cfg.with_cells(n)?;
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn out_file(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Simulate => {
            let cfg = run_config(cli)?;
            let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let summary = run_experiment(&cfg, &dir)?;
            let last = summary.rows.last().context("run produced no rows")?;
            println!(
                "t={} main={} secondary={} total_probability={:.12} max_displacement={:e} steps={} runtime={:.1}s",
                last.time,
                last.main,
                last.secondary,
                last.total_probability,
                last.max_displacement,
                summary.steps,
                summary.runtime_s
            );
        }
        Command::LocalStudy { kernel, radii, n, convergence } => {
            let profile = parse_kernel_spec(kernel)?;
            let rows = local_study(&profile, radii, *n);
            write_or_print(cli.out.as_deref(), &local_study_csv(&rows))?;
            if let Some(path) = convergence {
                write_atomic(path, &convergence_csv(&profile, radii, (*n).max(1))?)?;
            }
        }
        Command::Validate { ensemble_sizes, sigma, runs } => {
            let vcfg = if cli.config.is_some() || cli.preset.is_some() {
                validation_from_config(&run_config(cli)?, *runs)
            } else {
                let mut v = ValidationConfig::heat(*sigma, cli.seed.unwrap_or(0)).map_err(|e| anyhow::anyhow!("{e}"))?;
                v.runs = *runs;
                v
            };
            let rows = validate(&vcfg, ensemble_sizes)?;
            write_atomic(&out_file(cli, "validation.csv"), &validation_csv(&rows))?;
        }
        Command::Clusters { snapshot, theta, main_fraction, merge_radius } => {
            let text = std::fs::read_to_string(snapshot).with_context(|| format!("reading {}", snapshot.display()))?;
            let (t, m) = read_snapshot(&text).with_context(|| format!("parsing {}", snapshot.display()))?;
            let params = ClusterParams { theta: *theta, merge_radius: *merge_radius, main_fraction: *main_fraction };
            let report = detect_clusters(&m, &params);
            eprintln!("t={t} main={} secondary={} atoms_in_secondary={}", report.main, report.secondary, report.atoms_in_secondary);
            write_or_print(cli.out.as_deref(), &cluster_csv(&report))?;
        }
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

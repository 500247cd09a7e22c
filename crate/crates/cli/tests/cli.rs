use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use colony_cli::{load_config, parse_config, serialize_config};

fn colony(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colony")).args(args).current_dir(cwd).output().expect("binary runs")
}

const SMALL_RUN: &str = "preset = fig3-u0.9\ngrid.cells = 24\nstep.t_max = 1.0\nsnapshots = 0, 0.5, 1\n";

fn write_small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(&path, SMALL_RUN).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_snapshots_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_config(tmp.path());
    let out = tmp.path().join("run");
    let res = colony(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["snapshot_t0.000.csv", "snapshot_t0.500.csv", "snapshot_t1.000.csv", "summary.csv"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("time,total_probability,atom_bbox,n_clusters_main"));
    assert_eq!(lines.count(), 3);
    assert!(!fs::read_dir(&out).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn unwritable_output_fails_without_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("run");
    let res = colony(&["simulate", "--preset", "fig3-u0", "--grid", "10", "--out", out.to_str().unwrap()], tmp.path());
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
    assert!(!out.join("summary.csv").exists());
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.cfg");
    fs::write(&path, "preset = fig3-u1\nkernel.radius = -2\n").unwrap();
    let res = colony(&["simulate", "--config", path.to_str().unwrap()], tmp.path());
    assert!(!res.status.success());
    fs::write(&path, "preset = fig3-u1\nbogus.key = 1\n").unwrap();
    let res = colony(&["simulate", "--config", path.to_str().unwrap()], tmp.path());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(!res.status.success());
    assert!(err.contains("bogus.key") && err.contains('2'), "{err}");
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_config(tmp.path());
    let dirs = ["one", "three"];
    for (dir, threads) in dirs.iter().zip(["1", "3"]) {
        let out = tmp.path().join(dir);
        let res = colony(&["simulate", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()], tmp.path());
        assert!(res.status.success());
    }
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("one")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for name in names {
        let a = fs::read(tmp.path().join("one").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("three").join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn clusters_verb_reads_a_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_config(tmp.path());
    let out = tmp.path().join("run");
    assert!(colony(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path()).status.success());
    let snap = out.join("snapshot_t0.000.csv");
    let res = colony(&["clusters", snap.to_str().unwrap(), "--theta", "0.1"], tmp.path());
    assert!(res.status.success());
    let table = String::from_utf8(res.stdout).unwrap();
    assert!(table.starts_with("centroid_x,centroid_y,mass_fraction,atoms,cells,kind"));
    let total: f64 = table.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");

    let res = colony(&["clusters", tmp.path().join("missing.csv").to_str().unwrap()], tmp.path());
    assert!(!res.status.success());
}

#[test]
fn local_study_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("coeffs.csv");
    let conv = tmp.path().join("conv.csv");
    let res = colony(
        &[
            "local-study",
            "--kernel",
            "repulsion",
            "--R",
            "0.4,0.2,0.1",
            "--n",
            "100",
            "--out",
            table.to_str().unwrap(),
            "--convergence",
            conv.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let t = fs::read_to_string(table).unwrap();
    assert_eq!(t.lines().count(), 1 + 3 * 3);
    assert!(t.lines().nth(1).unwrap().starts_with("isotropic-H1H2,0.4,"));
    let c = fs::read_to_string(conv).unwrap();
    let order: f64 = c.lines().last().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((order - 7.0).abs() < 0.5, "{c}");

    let res = colony(&["local-study", "--kernel", "gauss"], tmp.path());
    assert!(!res.status.success());
}

#[test]
fn validate_writes_one_row_per_size() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v.csv");
    let res = colony(&["validate", "--ensemble-sizes", "50,500", "--runs", "1", "--out", out.to_str().unwrap()], tmp.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,M,W1,msd,runtime_s");
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with("1.0,500,"));
}

#[test]
fn serialized_configs_load_back_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(SMALL_RUN).unwrap();
    let path = tmp.path().join("round.cfg");
    fs::write(&path, serialize_config(&cfg)).unwrap();
    let back = load_config(&path).unwrap();
    assert_eq!(back.sim, cfg.sim);
    assert_eq!(back.clusters, cfg.clusters);
}

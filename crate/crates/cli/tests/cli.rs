use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exciton_heom::config::{parse_config, PairTask, RunConfig, ScanParameter, Task};
use exciton_heom::files::{parse_scan, parse_series, parse_trajectory};
use exciton_heom::scan::{dimer_preset, fmo_preset, scan_config};

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exciton-heom"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("exciton-heom-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    exe().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Short, shallow dimer run used by most tests.
fn quick_dimer() -> RunConfig {
    let mut cfg = dimer_preset().with_max_tier(6);
    cfg.integration.t_end_fs = 200.0;
    cfg
}

#[test]
fn presets_round_trip() {
    let out = run(&["preset", "dimer"]);
    assert!(out.status.success());
    assert_eq!(parse_config(&stdout(&out)).unwrap(), dimer_preset());

    let out = run(&["preset", "fmo"]);
    assert!(out.status.success());
    assert_eq!(parse_config(&stdout(&out)).unwrap(), fmo_preset());
}

#[test]
fn fmo_preset_needs_valid_hamiltonian_file() {
    let dir = scratch("fmo-file");
    let bad = dir.join("h.csv");
    fs::write(&bad, "0, 1\n1, 0\n").unwrap();
    let out = run(&["preset", "fmo", "--hamiltonian", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let missing = dir.join("missing.csv");
    assert_eq!(run(&["preset", "fmo", "--hamiltonian", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn identical_states_give_zero_distance() {
    let dir = scratch("identical");
    let mut cfg = quick_dimer();
    cfg.task = Task::Pair(PairTask {
        initial_sites: [1, 1],
        correlation_times_fs: None,
    });
    let config = write_config(&dir, &cfg);
    let out_path = dir.join("d.csv");
    let out = run(&["distance", "--config", config.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = parse_series(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(series.len(), 21);
    assert!(series.values.iter().all(|&d| d == 0.0));
}

#[test]
fn several_correlation_times_get_suffixed_files() {
    let dir = scratch("suffix");
    let config = write_config(&dir, &quick_dimer());
    let out_path = dir.join("ado.csv");
    let out = run(&["ado-distance", "--config", config.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for tau in ["50", "100", "150"] {
        let text = fs::read_to_string(dir.join(format!("ado_tau{tau}fs.csv"))).unwrap();
        let series = parse_series(&text).unwrap();
        assert_eq!(series.values[0], 0.0);
        assert!(text.contains(&format!("tau_c_fs = {tau}.0")));
    }
    // shallow hierarchy must be reported
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn output_is_reproducible() {
    let dir = scratch("repro");
    let config = write_config(&dir, &quick_dimer());
    let args = ["distance", "--config", config.to_str().unwrap(), "--tau-c", "100"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(parse_series(&stdout(&a)).unwrap().values[0], 1.0);
}

#[test]
fn propagate_writes_trajectory_and_sidecars() {
    let dir = scratch("propagate");
    let mut cfg = quick_dimer().with_tau_c(150.0).with_max_tier(2);
    cfg.integration.t_end_fs = 50.0;
    let config = write_config(&dir, &cfg);
    let out_path = dir.join("traj.csv");
    let out = run(&[
        "propagate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--with-ados",
        "--ado-window",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.lines().any(|l| l == "0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0"));
    let (times, states) = parse_trajectory(&text).unwrap();
    assert_eq!(times.len(), 6);
    assert!((states[5][(0, 0)].re + states[5][(1, 1)].re - 1.0).abs() < 1e-12);
    // 6 samples in windows of 4
    assert!(dir.join("traj.ado.0.csv").exists());
    assert!(dir.join("traj.ado.1.csv").exists());
    assert!(!dir.join("traj.ado.2.csv").exists());
}

#[test]
fn nm_reports_one_row_per_correlation_time() {
    let dir = scratch("nm");
    let config = write_config(&dir, &quick_dimer());
    let out = run(&["nm", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "tau_c_fs, nm_ity, valid, max_tier, pair_id");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("150.0, "));
    assert!(rows[3].ends_with(", false, 6, site:1/site:2"));
}

#[test]
fn nm_optimize_runs() {
    let dir = scratch("optimize");
    let mut cfg = quick_dimer().with_tau_c(150.0);
    cfg.task = Task::Optimize(exciton_heom::config::OptimizeTask {
        n_states: 3,
        max_tier: 4,
        t_end_fs: 100.0,
    });
    let config = write_config(&dir, &cfg);
    let out = run(&["nm-optimize", "--config", config.to_str().unwrap(), "--n-states", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let row = text.lines().last().unwrap();
    assert!(row.contains("bloch:"), "{row}");
    assert!(row.contains(", 4, "), "{row}");
}

#[test]
fn scan_writes_rows_and_warns() {
    let dir = scratch("scan");
    let mut cfg = scan_config(&quick_dimer(), ScanParameter::Coupling, vec![150.0]);
    if let Task::Scan(s) = &mut cfg.task {
        s.grid = vec![-87.7, 0.0];
        s.t_end_fs = 200.0;
    }
    let config = write_config(&dir, &cfg);
    let out_path = dir.join("scan.csv");
    let out = run(&["scan", "--config", config.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result = parse_scan(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(result.rows.len(), 2);
    assert!(result.rows[1].nm_ity.abs() < 1e-6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient hierarchy depth"));

    let pair = write_config(&scratch("scan-pair"), &quick_dimer());
    assert_eq!(run(&["scan", "--config", pair.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = scratch("invalid");
    let text = quick_dimer().to_toml().replace("lambda_cm = 20.0", "lambda_cm = -1.0");
    let path = dir.join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = run(&["nm", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_cm"));

    let unknown = dir.join("unknown.toml");
    fs::write(&unknown, quick_dimer().to_toml().replace("dt_fs", "dt_ps")).unwrap();
    let out = run(&["distance", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt_ps"));

    let good = write_config(&dir, &quick_dimer());
    assert_eq!(run(&["nm", "--config", good.to_str().unwrap(), "--tau-c", "-5"]).status.code(), Some(1));
    assert_eq!(run(&["nm", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unstable_step_is_rejected() {
    let dir = scratch("unstable");
    let mut cfg = quick_dimer().with_tau_c(20.0);
    cfg.integration.dt_fs = 10.0;
    cfg.bath.allow_outside_high_temperature = true;
    let config = write_config(&dir, &cfg.with_max_tier(39));
    let out = run(&["distance", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability"));
}

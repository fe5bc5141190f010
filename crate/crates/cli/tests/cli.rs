use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use scatterwave::diagnostics::read_report;
use scatterwave::free::radial_gaussian_oracle;
use scatterwave::grid::norm3;
use scatterwave::grid::wvf::read_field;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_scatterwave"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FREE_GAUSSIAN: &str = "obstacle.radius = none\ngrid.h = 0.25\ngrid.half_width = 2\ntimes.t_final = 2\n\
    quadrature.sphere_degree = 23\ndata.f0.profile = zero\ndata.f1.profile = gaussian\ndata.f1.sigma = 1\n";

#[test]
fn free_evolve_of_zero_data_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "obstacle.radius = none\ngrid.h = 0.25\ngrid.half_width = 1.5\ntimes.t_final = 1\n\
               data.f0.profile = zero\ndata.f1.profile = zero\n";
    let o = run(dir.path(), cfg, &["free-evolve", "--out", "zero"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (u, t) = read_field(BufReader::new(File::open(dir.path().join("zero/free_0_u.wvf")).unwrap())).unwrap();
    assert_eq!(t, 1.0);
    assert!(u.values.iter().all(|&v| v == 0.0));
    let rows = read_report(BufReader::new(File::open(dir.path().join("zero/audit.csv")).unwrap())).unwrap();
    assert!(rows.iter().all(|r| r.pass));
}

#[test]
fn free_evolve_of_a_gaussian_matches_the_radial_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), FREE_GAUSSIAN, &["free-evolve", "--out", "g"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (u, t) = read_field(BufReader::new(File::open(dir.path().join("g/free_0_u.wvf")).unwrap())).unwrap();
    assert_eq!(t, 2.0);
    for idx in 0..u.grid.len() {
        let r = norm3(u.grid.point_of(idx));
        assert!((u.values[idx] - radial_gaussian_oracle(2.0, r)).abs() < 1e-6);
    }
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(dir.path(), FREE_GAUSSIAN, &["free-evolve", "--out", out, "--threads", "2"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["free_0_u.wvf", "free_0_ut.wvf", "audit.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn output_dir_is_created_or_the_path_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), FREE_GAUSSIAN, &["free-evolve", "--out", "deep/nested/out"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("deep/nested/out/audit.csv").exists());
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let o = run(dir.path(), FREE_GAUSSIAN, &["free-evolve", "--out", "blocker/out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("blocker/out"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "grid.h = -0.1\n", &["free-evolve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.h"));
    let o = run(dir.path(), "obstacle.radius = 0.9\nobstacle.center = 0.5, 0, 0\n", &["scatter"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("obstacle.radius"));
}

#[test]
fn scatter_with_one_round_lists_one_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "grid.h = 0.2\nscattering.j = 1\n", &["scatter", "--out", "s", "--json-summary", "s.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(dir.path().join("s/manifest.txt")).unwrap();
    assert!(manifest.contains("T = 5"));
    assert!(manifest.contains("iterate.1.rho"));
    assert!(!manifest.contains("iterate.2"));
    assert!(manifest.contains("file.f_plus = f_plus_f0.wvf f_plus_f1.wvf"));
    let rows = read_report(BufReader::new(File::open(dir.path().join("s/audit.csv")).unwrap())).unwrap();
    let rho = rows.iter().find(|r| r.check == "rho(T)").unwrap();
    assert!(rho.pass && rho.value <= 0.5);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "scatter");
    assert_eq!(summary["exit_code"], 0);
    assert_eq!(summary["config_sha256"].as_str().unwrap().len(), 64);
    assert!(summary["wall_seconds"].as_f64().unwrap() > 0.0);
}

#[test]
fn fixed_period_below_the_bound_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "grid.h = 0.2\nscattering.period = 4\n", &["scatter"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a* + 2"), "{}", stderr(&o));
}

#[test]
fn radon_and_radiation_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{FREE_GAUSSIAN}radiation.s_min = -7\nradiation.s_max = 7\nradiation.ds = 0.5\nquadrature.plane_nodes = 40\n");
    let o = run(dir.path(), &cfg, &["radon", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("r/radon.csv")).unwrap();
    assert!(text.starts_with("s,eta_x,eta_y,eta_z,R_f0,R_f1\n"));
    assert_eq!(text.lines().count(), 1 + 29 * 26);
    let row = text.lines().find(|l| l.starts_with("0e0,")).unwrap();
    let r1: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert!((r1 - std::f64::consts::PI).abs() < 1e-8);

    let o = run(dir.path(), &cfg, &["radiation", "--out", "f"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_report(BufReader::new(File::open(dir.path().join("f/audit.csv")).unwrap())).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.pass));
}

#[test]
fn exterior_evolve_writes_energy_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "obstacle.center = 0.2, 0, 0\nobstacle.radius = 0.5\ngrid.h = 0.1\ntimes.t_final = 1\n\
               times.snapshots = 0.5, 1\ndata.f0.profile = gaussian_ring\ndata.f0.r0 = 1.4\ndata.f0.sigma = 0.14\n";
    let o = run(dir.path(), cfg, &["exterior-evolve", "--out", "e"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let energy = std::fs::read_to_string(dir.path().join("e/energy.csv")).unwrap();
    assert!(energy.starts_with("t,local_energy_R,total_energy\n"));
    assert!(dir.path().join("e/exterior_1_ut.wvf").exists());
}

#[test]
fn verify_writes_the_report_and_flags_broken_stability() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "verify.scale = smoke\nverify.criteria = 1, 4\n", &["verify", "--out", "v"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("v/verify.csv")).unwrap();
    assert!(text.starts_with("check,window_or_region,value,threshold,pass\n"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion  4 radon identities"));

    let o = run(dir.path(), "verify.scale = smoke\nverify.criteria = 5\ngrid.courant = 1\n", &["verify", "--out", "w"]);
    assert_eq!(o.status.code(), Some(4));
    let rows = read_report(BufReader::new(File::open(dir.path().join("w/verify.csv")).unwrap())).unwrap();
    let failed = rows.iter().find(|r| !r.pass).unwrap();
    assert!(failed.check.starts_with("c5"));
    assert!(failed.window_or_region.contains("stability bound"), "{}", failed.window_or_region);
}

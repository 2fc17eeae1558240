use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use abc_hydro::empirical::DensityProfile;
use abc_hydro::simulator::read_trajectory;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abc-hydro"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = run(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn zero_horizon_single_replica_profile_is_the_initial_configuration() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "simulate",
            "--set",
            "sim.replicas=1",
            "--set",
            "sim.t_end=0",
            "--set",
            "sim.N=[20]",
        ],
        dir.path(),
    );
    let prof = DensityProfile::from_csv(&fs::read_to_string(dir.path().join("profile_N20_t0.csv")).unwrap())
        .unwrap();
    let traj = read_trajectory(fs::File::open(dir.path().join("trajectories_N20.bin")).unwrap()).unwrap();
    assert_eq!(prof, DensityProfile::from_occupancy(&traj.snapshots[0].occupancy));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "simulate",
        "--seed",
        "9",
        "--set",
        "sim.N=[16, 32]",
        "--set",
        "sim.replicas=20",
    ];
    ok(&args, a.path());
    ok(&[&args[..], &["--jobs", "1"]].concat(), b.path());
    let files = manifest(a.path())["outputs"].as_array().unwrap().clone();
    assert_eq!(files.len(), 4);
    for f in files {
        let f = f.as_str().unwrap();
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    ok(
        &[
            "simulate",
            "--seed",
            "10",
            "--set",
            "sim.N=[16, 32]",
            "--set",
            "sim.replicas=20",
        ],
        c.path(),
    );
    assert_ne!(
        fs::read(a.path().join("profile_N32_t0.1.csv")).unwrap(),
        fs::read(c.path().join("profile_N32_t0.1.csv")).unwrap()
    );
}

#[test]
fn standard_errors_scale_with_replica_count() {
    let mean_se = |r: usize| {
        let dir = tempfile::tempdir().unwrap();
        let reps = format!("sim.replicas={r}");
        ok(
            &["simulate", "--set", &reps, "--set", "sim.trajectories=false"],
            dir.path(),
        );
        let rows = csv_rows(&dir.path().join("profile_N64_t0.1.csv"));
        rows.iter()
            .map(|r| r[4..7].iter().map(|v| v.parse::<f64>().unwrap()).sum::<f64>())
            .sum::<f64>()
            / rows.len() as f64
    };
    let ratio = mean_se(200) / mean_se(50);
    assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
}

#[test]
fn flat_dirichlet_state_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &[
            "solve",
            "--set",
            "model.right=[0.5, 0.3, 0.2]",
            "--set",
            "init.profile=constant",
            "--set",
            "pde.M=128",
        ],
        dir.path(),
    );
    assert!(out.contains("regime=dirichlet"));
    for row in csv_rows(&dir.path().join("pde_M128.csv")) {
        for (v, r) in row[2..].iter().zip([0.5, 0.3, 0.2]) {
            assert!((v.parse::<f64>().unwrap() - r).abs() <= 1e-12);
        }
    }
    let m = manifest(dir.path());
    assert!(m["metrics"]["max_residual_M128"].as_f64().unwrap() < 1e-8);
}

#[test]
fn b1_solve_reports_conserved_mass_and_refinement_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &[
            "solve",
            "--set",
            "model.theta=2",
            "--set",
            "model.delta=2",
            "--set",
            "init.profile=bump",
            "--set",
            "init.value=[0.3, 0.3, 0.4]",
            "--set",
            "pde.M=64",
            "--set",
            "pde.outputs=[0.05]",
            "--set",
            "pde.refine=true",
        ],
        dir.path(),
    );
    assert!(out.contains("regime=b1") && out.contains("residual ratio"));
    let m = manifest(dir.path());
    assert_eq!(m["regime"], "b1");
    for key in ["mass_drift_M64", "mass_drift_M128"] {
        assert!(m["metrics"][key].as_f64().unwrap() <= 1e-6, "{key}");
    }
    assert!(m["metrics"]["residual_ratio"].as_f64().unwrap() > 1.0);
    let rows = csv_rows(&dir.path().join("mass_M64.csv"));
    assert_eq!(
        rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(),
        ["0", "0.05", "0.1"]
    );
}

#[test]
fn symmetric_steady_state_comparison_sits_at_the_noise_floor() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "compare",
            "--set",
            "model.beta=0",
            "--set",
            "model.beta_tilde=0",
            "--set",
            "sim.t_end=1.0",
            "--set",
            "sim.N=[16, 32]",
            "--set",
            "sim.replicas=200",
            "--set",
            "pde.M=64",
        ],
        dir.path(),
    );
    let rows = csv_rows(&dir.path().join("compare.csv"));
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!((r[1].as_str(), r[2].as_str(), r[3].as_str()), ("200", "1", "L1"));
        let (err, se): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!(err < 1.5 * se, "N={}: error {err}, noise {se}", r[0]);
    }
}

#[test]
fn compare_rejects_mismatched_times() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "compare",
            "--set",
            "pde.outputs=[0.05]",
            "--set",
            "sim.replicas=2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time mismatch"));
}

#[test]
fn oracle_suite_passes_and_the_fault_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["oracle"], dir.path());
    assert!(out.contains("7 of 7 identities passed"), "{out}");
    assert!(out.contains("N=3 max|z|="));

    let bad = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--set", "oracle.fault=true"], bad.path());
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("right boundary adjoint") && err.contains("Monte Carlo"),
        "{err}"
    );
    assert!(bad.path().join("oracle_report.txt").exists());
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (vec!["--set", "model.theta=0.8"], "theta >= delta and theta >= 1"),
        (
            vec![
                "--set",
                "model.theta=1",
                "--set",
                "model.delta=1",
                "--set",
                "model.beta_tilde=2.5",
            ],
            "beta_tilde < 2",
        ),
        (vec!["--set", "sim.N=[64, 32]"], "ascending"),
        (vec!["--set", "sim.replicas=0"], "sim.replicas"),
        (vec!["--set", "model.right=[0.0, 0.5, 0.5]"], "model.right"),
    ];
    for (args, needle) in cases {
        let o = run(&[&["simulate"], &args[..]].concat(), dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn config_file_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("exp.toml");
    fs::write(
        &file,
        "[model]\ntheta = 2.0\ndelta = 1.0\n\n[pde]\nM = 32\n\n[sweep]\nkey = \"model.beta\"\nvalues = [0.0, 1.0]\ncommand = \"solve\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["sweep", "--config", file.to_str().unwrap()], &out);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[3], "0");
        let sub = manifest(&out.join(&r[2]));
        assert_eq!(sub["regime"], "b3");
        assert_eq!(
            sub["config"]["model"]["beta"].as_f64().unwrap(),
            r[1].parse::<f64>().unwrap()
        );
    }
}

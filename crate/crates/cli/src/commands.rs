use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use abc_hydro::compare::compare_profile;
use abc_hydro::empirical::DensityProfile;
use abc_hydro::oracle::run_suite;
use abc_hydro::pde::{solve, weak_residual, FieldTriple, Grid1D, PdeProblem, PdeSolution, SolverConfig};
use abc_hydro::simulator::{
    replica_seed, replicas, rng_for, sample_initial, simulate, write_trajectory, Trajectory,
};
use abc_hydro::testfn::{Shape, TestFunction};
use abc_hydro::Species;
use toml::Table;

use crate::config::{set_dotted, ExperimentConfig};
use crate::manifest::RunManifest;
use crate::CliError;

pub fn run_command(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let mut m = RunManifest::new(name, cfg)?;
    let result = match name {
        "simulate" => cmd_simulate(cfg, out, &mut m).map(|_| ()),
        "solve" => cmd_solve(cfg, out, &mut m),
        "compare" => cmd_compare(cfg, out, &mut m),
        "oracle" => cmd_oracle(cfg, out, &mut m),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    };
    // Identity failures still leave a complete record behind.
    if result.is_ok() || matches!(result, Err(CliError::Identity(_))) {
        m.save(out)?;
    }
    result
}

fn species_label(s: Species) -> &'static str {
    match s {
        Species::A => "A",
        Species::B => "B",
        Species::Empty => "E",
    }
}

fn describe(phi: &TestFunction<f64>) -> String {
    let base = match phi.shape {
        Shape::Constant(c) => format!("const({c})"),
        Shape::Affine { c0, c1 } => format!("affine({c0};{c1})"),
        Shape::Cosine { k, offset } => format!("cos({k};{offset})"),
        Shape::Bump { a, b, weight } => format!("bump({a};{b};{weight})"),
    };
    if phi.decay == 0.0 {
        base
    } else {
        format!("{base}*exp(-{}t)", phi.decay)
    }
}

/// Replica-mean profiles at each snapshot time, for one lattice size.
type Profiles = Vec<(f64, DensityProfile)>;

fn cmd_simulate(
    cfg: &ExperimentConfig,
    out: &Path,
    m: &mut RunManifest,
) -> Result<Vec<(usize, Profiles)>, CliError> {
    let preset = cfg.preset()?;
    let times = cfg.snapshot_times();
    let mut all = Vec::new();
    for &n in &cfg.sim.n {
        let params = cfg.model.params(n)?;
        let runs = m.time(&format!("simulate N={n}"), |_| {
            replicas(cfg.sim.replicas, replica_seed(cfg.sim.seed, n as u64), |_, s| {
                let mut rng = rng_for(s);
                let init = sample_initial(|u| preset.eval(u), n, &mut rng)?;
                simulate(&params, init, cfg.sim.t_end, &times, replica_seed(s, 1))
            })
            .into_iter()
            .collect::<Result<Vec<Trajectory>, _>>()
            .map_err(|e| CliError::Numerical(format!("simulation at N = {n}: {e}")))
        })?;
        if cfg.sim.trajectories {
            let name = format!("trajectories_N{n}.bin");
            let mut w = BufWriter::new(File::create(out.join(&name))?);
            for r in &runs {
                write_trajectory(&mut w, r)?;
            }
            drop(w);
            m.outputs.push(name);
        }
        let mut per_time = Vec::new();
        for (k, &t) in times.iter().enumerate() {
            let configs: Vec<&[Species]> = runs.iter().map(|r| r.snapshots[k].occupancy.as_slice()).collect();
            let prof = DensityProfile::replica_mean(&configs);
            m.write_output(out, &format!("profile_N{n}_t{t}.csv"), prof.to_csv())?;
            per_time.push((t, prof));
        }
        let events: u64 = runs.iter().map(|r| r.event_count).sum();
        m.metrics
            .insert(format!("mean_events_N{n}"), events as f64 / runs.len() as f64);
        all.push((n, per_time));
    }
    Ok(all)
}

fn solve_at(cfg: &ExperimentConfig, m_cells: usize) -> Result<PdeSolution<f64>, CliError> {
    let params = cfg.model.params(cfg.model.n)?;
    let problem = PdeProblem::with_regime(&params, cfg.regime()?);
    let grid = Grid1D::new(m_cells).map_err(|e| CliError::Config(e.to_string()))?;
    let preset = cfg.preset()?;
    let solver = SolverConfig {
        safety: cfg.pde.safety,
        outputs: cfg.pde_outputs(),
        ..SolverConfig::new(m_cells, cfg.sim.t_end)
    };
    solve(
        FieldTriple::from_profile(&grid, |u| preset.eval(u)),
        &problem,
        &solver,
    )
    .map_err(|e| CliError::Numerical(format!("PDE solve at M = {m_cells}: {e}")))
}

/// Residual table for every stored time after 0; returns the largest
/// magnitude at the final time.
fn residual_report(sol: &PdeSolution<f64>) -> Result<(String, f64), CliError> {
    let family = if sol.problem.regime.is_dirichlet() {
        TestFunction::dirichlet_family()
    } else {
        TestFunction::robin_family()
    };
    let mut csv = String::from("time,test_function,species,residual\n");
    let mut last = 0.0f64;
    let t_end = *sol.times.last().expect("solution has a final time");
    for &t in sol.times.iter().filter(|t| **t > 0.0) {
        for phi in &family {
            for s in Species::ALL {
                let r = weak_residual(sol, phi, s, t).map_err(|e| CliError::Numerical(e.to_string()))?;
                let _ = writeln!(csv, "{t},{},{},{r:e}", describe(phi), species_label(s));
                if t == t_end {
                    last = last.max(r.abs());
                }
            }
        }
    }
    Ok((csv, last))
}

fn record_solution(sol: &PdeSolution<f64>, out: &Path, m: &mut RunManifest) -> Result<f64, CliError> {
    let cells = sol.grid.cells();
    m.write_output(out, &format!("pde_M{cells}.csv"), sol.to_csv())?;
    let (csv, res) = residual_report(sol)?;
    m.write_output(out, &format!("residuals_M{cells}.csv"), csv)?;
    let h = sol.grid.h();
    let m0 = sol.fields[0].mass(h);
    let mut masses = String::from("time,mass_A,mass_B,mass_E\n");
    let mut drift = 0.0f64;
    for (t, f) in sol.times.iter().zip(&sol.fields) {
        let mt = f.mass(h);
        let _ = writeln!(masses, "{t},{:e},{:e},{:e}", mt[0], mt[1], mt[2]);
        drift = (0..3).map(|a| (mt[a] - m0[a]).abs()).fold(drift, f64::max);
    }
    m.write_output(out, &format!("mass_M{cells}.csv"), masses)?;
    m.metrics.insert(format!("max_residual_M{cells}"), res);
    m.metrics.insert(format!("mass_drift_M{cells}"), drift);
    m.metrics
        .insert(format!("max_sum_defect_M{cells}"), sol.max_sum_defect());
    if sol.problem.regime.is_dirichlet() {
        let (b0, b1) = sol.final_fields().extrapolated_boundary();
        let err = (0..3)
            .map(|a| {
                (b0[a] - sol.problem.left[a])
                    .abs()
                    .max((b1[a] - sol.problem.right[a]).abs())
            })
            .fold(0.0, f64::max);
        m.metrics.insert(format!("boundary_error_M{cells}"), err);
    }
    println!(
        "M={cells} regime={} steps={} max|residual|={res:.3e} mass drift={drift:.3e} sum defect={:.3e}",
        sol.problem.regime.label(),
        sol.steps,
        sol.max_sum_defect()
    );
    Ok(res)
}

fn cmd_solve(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let sol = m.time("solve", |_| solve_at(cfg, cfg.pde.m))?;
    let coarse = record_solution(&sol, out, m)?;
    if cfg.pde.refine {
        let fine = m.time("solve refined", |_| solve_at(cfg, 2 * cfg.pde.m))?;
        let r = record_solution(&fine, out, m)?;
        let ratio = coarse / r;
        m.metrics.insert("residual_ratio".into(), ratio);
        println!(
            "residual ratio M={} -> M={}: {ratio:.3}",
            cfg.pde.m,
            2 * cfg.pde.m
        );
    }
    Ok(())
}

fn cmd_compare(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let outputs = cfg.pde_outputs();
    let times = cfg.snapshot_times();
    if let Some(t) = times
        .iter()
        .find(|t| !outputs.iter().any(|o| (*o - **t).abs() <= 1e-12))
    {
        return Err(CliError::Config(format!(
            "time mismatch: simulation snapshot {t} is not among pde.outputs {outputs:?}"
        )));
    }
    let norm = cfg.norm()?;
    let sol = m.time("solve", |_| solve_at(cfg, cfg.pde.m))?;
    m.write_output(out, &format!("pde_M{}.csv", cfg.pde.m), sol.to_csv())?;
    let profiles = cmd_simulate(cfg, out, m)?;
    let mut csv = String::from("N,R,t,norm,error,stderr\n");
    println!(
        "{:>6} {:>6} {:>8} {:>12} {:>12}",
        "N", "R", "t", "error", "stderr"
    );
    for (n, per_time) in &profiles {
        for (t, prof) in per_time {
            let k = sol
                .index_of(*t)
                .map_err(|e| CliError::Config(format!("time mismatch: {e}")))?;
            let (err, noise) = compare_profile(prof, &sol, k, norm);
            let _ = writeln!(
                csv,
                "{n},{},{t},{},{err:e},{noise:e}",
                cfg.sim.replicas,
                norm.label()
            );
            println!(
                "{n:>6} {:>6} {t:>8} {err:>12.4e} {noise:>12.4e}",
                cfg.sim.replicas
            );
            m.metrics.insert(format!("error_N{n}_t{t}"), err);
        }
    }
    m.write_output(out, "compare.csv", csv)?;
    Ok(())
}

fn cmd_oracle(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let suite = cfg.suite()?;
    let report = m
        .time("oracle", |_| run_suite(&suite))
        .map_err(|e| CliError::Numerical(format!("oracle: {e}")))?;
    let text = report.to_text();
    print!("{text}");
    m.write_output(out, "oracle_report.txt", &text)?;
    for line in &report.lines {
        m.metrics.insert(line.name.clone(), line.deviation);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Identity(report.failures().join(", ")))
    }
}

fn path_safe(v: &toml::Value) -> String {
    let raw = match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs `sweep.command` once per value of `sweep.key`, each in its own
/// subdirectory, and lists the runs in `sweep.csv`.
pub fn sweep(cfg: &ExperimentConfig, table: &Table, out: &Path) -> Result<(), CliError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a [sweep] section with key, values, command".into()))?;
    let mut base = table.clone();
    base.remove("sweep");
    let mut runs = Vec::new();
    for (i, v) in sw.values.iter().enumerate() {
        let mut t = base.clone();
        set_dotted(&mut t, &sw.key, v.clone())?;
        let sub_cfg = ExperimentConfig::from_table(&t)?;
        runs.push((i, v, format!("{i:02}_{}={}", sw.key, path_safe(v)), sub_cfg));
    }
    let mut m = RunManifest::new("sweep", cfg)?;
    let mut csv = String::from("index,value,dir,exit_code\n");
    let mut first_err = None;
    for (i, v, dir, sub_cfg) in runs {
        println!("[sweep {i}] {} = {v}", sw.key);
        let res = m.time(&dir, |_| run_command(&sw.command, &sub_cfg, &out.join(&dir)));
        let code = match &res {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("abc-hydro: sweep run {dir}: {e}");
                match e {
                    CliError::Config(_) => 2,
                    CliError::Numerical(_) => 3,
                    CliError::Identity(_) => 4,
                    CliError::Io(_) => 1,
                }
            }
        };
        let _ = writeln!(csv, "{i},{v},{dir},{code}");
        m.outputs.push(format!("{dir}/manifest.json"));
        if let Err(e) = res {
            m.outputs.pop();
            first_err.get_or_insert(e);
        }
    }
    m.write_output(out, "sweep.csv", csv)?;
    m.save(out)?;
    first_err.map_or(Ok(()), Err)
}

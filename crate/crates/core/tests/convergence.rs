use abc_hydro::empirical::{dynkin_residual, DensityProfile, DynkinTracker};
use abc_hydro::pde::{solve, FieldTriple, Grid1D, PdeProblem, PdeSolution, SolverConfig};
use abc_hydro::simulator::{replicas, rng_for, sample_initial, simulate, Simulation};
use abc_hydro::testfn::TestFunction;
use abc_hydro::{ModelParams, ReservoirDensities, Species};

fn model(theta: f64, delta: f64, beta_tilde: f64, beta: f64) -> ModelParams {
    ModelParams {
        n: 64,
        beta,
        beta_tilde,
        theta,
        delta,
        left: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
        right: ReservoirDensities::new(0.2, 0.3, 0.5).unwrap(),
    }
}

fn run(p: &ModelParams, m: usize, t: f64) -> PdeSolution<f64> {
    let problem = PdeProblem::from_model(p).unwrap();
    let g = Grid1D::new(m).unwrap();
    let init = FieldTriple::from_profile(&g, |u: f64| {
        let b = 0.1 * (std::f64::consts::PI * u).sin();
        [0.4 + b - 0.1 * u, 0.3, 0.3 - b + 0.1 * u]
    });
    solve(init, &problem, &SolverConfig::new(m, t)).unwrap()
}

/// L1 distance between a solution and the pairwise cell averages of one on
/// the doubled grid.
fn coarse_gap(coarse: &PdeSolution<f64>, fine: &PdeSolution<f64>) -> f64 {
    let (c, f) = (coarse.final_fields(), fine.final_fields());
    let h = coarse.grid.h();
    (0..3)
        .map(|a| {
            (0..c.cells())
                .map(|i| (c.rho[a][i] - 0.5 * (f.rho[a][2 * i] + f.rho[a][2 * i + 1])).abs())
                .sum::<f64>()
                * h
        })
        .sum()
}

#[test]
fn self_convergence_order_is_between_one_and_two() {
    for (theta, delta, bt) in [(1.5, 0.5, 1.0), (2.0, 2.0, 1.0), (1.0, 1.0, 1.0), (2.0, 1.0, 1.0)] {
        let p = model(theta, delta, bt, 1.0);
        let sols: Vec<_> = [32, 64, 128].iter().map(|&m| run(&p, m, 0.05)).collect();
        let e0 = coarse_gap(&sols[0], &sols[1]);
        let e1 = coarse_gap(&sols[1], &sols[2]);
        let order = (e0 / e1).log2();
        assert!(
            (0.9..=2.1).contains(&order),
            "theta={theta} delta={delta}: order {order}"
        );
    }
}

#[test]
fn symmetric_model_relaxes_to_reservoir_product_measure() {
    let r = ReservoirDensities::new(0.5, 0.3, 0.2).unwrap();
    let p = ModelParams {
        n: 8,
        beta: 0.0,
        beta_tilde: 0.0,
        theta: 1.0,
        delta: 0.5,
        left: r,
        right: r,
    };
    let count = 4000;
    let finals = replicas(count, 17, |_, s| {
        let mut rng = rng_for(s);
        let init = sample_initial(|_| [1.0 / 3.0; 3], 8, &mut rng).unwrap();
        simulate(&p, init, 2.0, &[2.0], s)
            .unwrap()
            .snapshots
            .pop()
            .unwrap()
            .occupancy
    });
    let prof = DensityProfile::replica_mean(&finals);
    let se = prof.stderr.as_ref().unwrap();
    for a in 0..3 {
        for i in 0..prof.len() {
            let z = (prof.values[a][i] - r.as_array()[a]) / se[a][i];
            assert!(z.abs() < 4.5, "species {a} site {i}: z = {z}");
        }
    }
}

#[test]
fn trapezoid_residual_tracks_exact_residual() {
    // With snapshots much finer than the mean holding time both routes agree.
    let p = model(1.5, 0.5, 1.0, 1.0).with_n(6);
    let phi = TestFunction::<f64>::cosine(1, 0.5);
    let t = 0.05;
    let times: Vec<f64> = (0..=20_000).map(|k| t * k as f64 / 20_000.0).collect();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = rng_for(seed + 100);
        let init = sample_initial(|_| [1.0 / 3.0; 3], 6, &mut rng).unwrap();
        let traj = simulate(&p, init.clone(), t, &times, seed).unwrap();
        let mut tracker = DynkinTracker::new(&phi, Species::A, &p, &init);
        let mut sim = Simulation::new(&p, init, seed).unwrap();
        sim.advance_observed(t, &mut tracker).unwrap();
        assert_eq!(
            sim.state().occupancy(),
            traj.snapshots.last().unwrap().occupancy.as_slice()
        );
        let snap = dynkin_residual(&traj, &phi, Species::A, &p, t, 1e-5).unwrap();
        worst = worst.max((snap - tracker.residual(t)).abs());
    }
    assert!(worst < 2e-2, "{worst}");
}

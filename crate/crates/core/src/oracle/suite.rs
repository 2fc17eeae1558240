//! The standard battery of exact identity checks, with pass/fail lines.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    adjoint_left, adjoint_right, build_generator, dirichlet_form_identity, exact_expectation, inner,
    relative_entropy, GeneratorMatrix, OracleError, Parts, ProductMeasure, StateSpace,
};
use crate::empirical::{generator_action, pair_empirical};
use crate::rates::{RateTable, Side};
use crate::simulator::{replicas, rng_for, sample_initial, simulate_with_rates};
use crate::species::{ModelParams, Species};
use crate::testfn::{Shape, TestFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    /// Template parameters; `n` is replaced per check.
    pub params: ModelParams,
    pub seed: u64,
    /// Random pairs / measures / densities per identity.
    pub samples: usize,
    pub expansion_samples: usize,
    pub mc_sizes: Vec<usize>,
    pub mc_times: Vec<f64>,
    pub mc_replicas: usize,
    /// Swap the right boundary up/down rates in the forward dynamics.
    pub fault: bool,
}

impl SuiteConfig {
    pub fn new(params: ModelParams) -> Self {
        SuiteConfig {
            params,
            seed: 20240611,
            samples: 100,
            expansion_samples: 200,
            mc_sizes: vec![3, 4],
            mc_times: vec![0.05, 0.2],
            mc_replicas: 100_000,
            fault: false,
        }
    }

    fn rates(&self, n: usize) -> Result<(ModelParams, RateTable), OracleError> {
        let p = self.params.with_n(n).validate()?;
        let mut r = RateTable::new(&p);
        if self.fault {
            r.inject_right_sign_fault();
        }
        Ok((p, r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityLine {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl IdentityLine {
    fn within(name: impl Into<String>, deviation: f64, tolerance: f64, detail: String) -> Self {
        IdentityLine {
            name: name.into(),
            deviation,
            tolerance,
            pass: deviation <= tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: max deviation {:.3e} (tolerance {:.1e}){}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.deviation,
            self.tolerance,
            if self.detail.is_empty() { "" } else { "; " },
            self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SuiteReport {
    pub lines: Vec<IdentityLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|l| !l.pass)
            .map(|l| l.name.as_str())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            let _ = writeln!(s, "{}", l.line());
        }
        let _ = writeln!(
            s,
            "{} of {} identities passed",
            self.lines.iter().filter(|l| l.pass).count(),
            self.lines.len()
        );
        s
    }
}

/// Generator sanity for every `N` from 3 to 6: zero row sums, nonnegative
/// off-diagonals, and additivity of the three pieces.
pub fn check_generators(cfg: &SuiteConfig) -> Result<IdentityLine, OracleError> {
    let mut dev = 0.0f64;
    let mut negative = 0.0f64;
    for n in 3..=6 {
        let (_, rates) = cfg.rates(n)?;
        let all = build_generator(&rates, Parts::all())?;
        dev = dev.max(all.max_row_sum());
        negative = negative.min(all.min_off_diagonal());
        let sum = [Parts::bulk(), Parts::left(), Parts::right()]
            .into_iter()
            .map(|p| build_generator(&rates, p).map(|g| g.q))
            .try_fold(all.q.clone() * 0.0, |acc, q| q.map(|q| acc + q))?;
        dev = dev.max((sum - &all.q).abs().max());
    }
    Ok(IdentityLine {
        pass: dev <= 1e-12 && negative >= 0.0,
        ..IdentityLine::within(
            "generator rows and additivity",
            dev,
            1e-12,
            format!("min off-diagonal {negative}"),
        )
    })
}

fn random_test_function(rng: &mut ChaCha8Rng) -> TestFunction<f64> {
    let decay = if rng.random::<bool>() {
        rng.random_range(0.0..2.0)
    } else {
        0.0
    };
    let shape = match rng.random_range(0..4) {
        0 => Shape::Affine {
            c0: rng.random_range(-1.0..1.0),
            c1: rng.random_range(-2.0..2.0),
        },
        1 => Shape::Cosine {
            k: rng.random_range(1..5),
            offset: rng.random_range(-1.0..1.0),
        },
        2 => {
            let a = rng.random_range(0.0..0.5);
            Shape::Bump {
                a,
                b: rng.random_range(a + 0.2..1.2),
                weight: rng.random_range(-1.0..1.0),
            }
        }
        _ => Shape::Constant(rng.random_range(-2.0..2.0)),
    };
    TestFunction::decaying(shape, decay)
}

/// `generator_action` against `N^2 (Q obs)` at `N = 5` over random
/// configurations, test functions, times and species.
pub fn check_expansion(cfg: &SuiteConfig) -> Result<IdentityLine, OracleError> {
    let (params, rates) = cfg.rates(5)?;
    let gen = build_generator(&rates, Parts::all())?;
    let space = gen.space;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xE);
    let n2 = 25.0;
    let mut worst = 0.0f64;
    for _ in 0..cfg.expansion_samples {
        let phi = random_test_function(&mut rng);
        let t = rng.random_range(0.0..1.0);
        let alpha = Species::ALL[rng.random_range(0..3)];
        let state = rng.random_range(0..space.size());
        let obs: Vec<f64> = space
            .states()
            .map(|o| pair_empirical::<f64>(&o, phi.at(t), alpha))
            .collect();
        let direct = n2 * gen.apply(&obs)?[state];
        let expanded = generator_action::<f64>(&space.decode(state), phi.at(t), alpha, &params);
        let scale = direct.abs().max(expanded.abs()).max(1e-300);
        worst = worst.max((direct - expanded).abs() / scale);
    }
    Ok(IdentityLine::within(
        "generator expansion vs direct generator (N=5, relative)",
        worst,
        1e-10,
        format!("{} samples", cfg.expansion_samples),
    ))
}

fn adjoint_measure(params: &ModelParams, rng: &mut ChaCha8Rng) -> Result<ProductMeasure, OracleError> {
    let sites = params.n - 1;
    let mut m: Vec<[f64; 3]> = (0..sites)
        .map(|_| {
            let w = [0, 1, 2].map(|_| rng.random_range(0.1..1.0));
            let z: f64 = w.iter().sum();
            w.map(|v| v / z)
        })
        .collect();
    m[0] = params.left.as_array();
    m[sites - 1] = params.right.as_array();
    ProductMeasure::new(m)
}

/// `<L f, g>_nu = <f, L* g>_nu` for random pairs at `N = 4`, with the forward
/// boundary generator from the (possibly faulted) rate table and the adjoint
/// from its closed form.
pub fn check_adjoint(cfg: &SuiteConfig, side: Side) -> Result<IdentityLine, OracleError> {
    let (params, rates) = cfg.rates(4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA0 ^ side as u64);
    let nu = adjoint_measure(&params, &mut rng)?;
    let space = StateSpace::new(4)?;
    let w = nu.weights(&space)?;
    let (forward, adjoint, name): (GeneratorMatrix, GeneratorMatrix, &str) = match side {
        Side::Left => (
            build_generator(&rates, Parts::left())?,
            adjoint_left(&params, &nu)?,
            "left",
        ),
        Side::Right => (
            build_generator(&rates, Parts::right())?,
            adjoint_right(&params, &nu)?,
            "right",
        ),
    };
    let mut worst = 0.0f64;
    for _ in 0..cfg.samples {
        let f: Vec<f64> = (0..space.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..space.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l = inner(&w, &forward.apply(&f)?, &g);
        let r = inner(&w, &f, &adjoint.apply(&g)?);
        worst = worst.max((l - r).abs());
    }
    Ok(IdentityLine::within(
        format!("{name} boundary adjoint (N=4)"),
        worst,
        1e-12,
        format!("{} random pairs", cfg.samples),
    ))
}

/// Random laws on `N = 5`: a mix of diffuse, sparse and point masses.
pub fn random_law(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut mu = vec![0.0; size];
    match rng.random_range(0..3) {
        0 => mu.iter_mut().for_each(|v| *v = rng.random::<f64>()),
        1 => {
            for _ in 0..rng.random_range(1..10) {
                mu[rng.random_range(0..size)] += rng.random::<f64>();
            }
        }
        _ => mu[rng.random_range(0..size)] = 1.0,
    }
    let z: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|v| *v /= z);
    mu
}

/// `0 <= H(mu | nu) <= (N - 1) log(1 / r_0)` for random `mu` at `N = 5`.
pub fn check_entropy(cfg: &SuiteConfig) -> Result<IdentityLine, OracleError> {
    let params = cfg.params.with_n(5).validate()?;
    let (l, r) = (params.left.as_array(), params.right.as_array());
    let nu = ProductMeasure::from_profile(5, |u| [0, 1, 2].map(|a| l[a] + (r[a] - l[a]) * u))?;
    let bound = 4.0 * (1.0 / nu.min_entry()).ln();
    let space = StateSpace::new(5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xE7);
    let mut worst = f64::NEG_INFINITY;
    let mut negative = false;
    for _ in 0..cfg.samples {
        let h = relative_entropy(&random_law(&mut rng, space.size()), &nu)?;
        negative |= h < -1e-15;
        worst = worst.max(h - bound);
    }
    Ok(IdentityLine {
        pass: worst <= 0.0 && !negative,
        ..IdentityLine::within(
            "entropy bound H <= (N-1) log(1/r0) (N=5)",
            worst.max(0.0),
            0.0,
            format!("largest H - bound {worst:.4}"),
        )
    })
}

/// Dirichlet-form identity for random densities at `N = 4`.
pub fn check_dirichlet_forms(cfg: &SuiteConfig) -> Result<IdentityLine, OracleError> {
    let (params, rates) = cfg.rates(4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD1);
    let nu = adjoint_measure(&params, &mut rng)?;
    let space = StateSpace::new(4)?;
    let w = nu.weights(&space)?;
    let mut worst = 0.0f64;
    let mut min_form = f64::INFINITY;
    for _ in 0..cfg.samples {
        let mut f: Vec<f64> = (0..space.size()).map(|_| rng.random::<f64>()).collect();
        let z = inner(&w, &f, &vec![1.0; f.len()]);
        f.iter_mut().for_each(|v| *v /= z);
        let rep = dirichlet_form_identity(&rates, &nu, &f)?;
        worst = worst.max(rep.max_deviation());
        min_form = min_form.min(rep.min_form());
    }
    Ok(IdentityLine {
        pass: worst <= 1e-12 && min_form >= 0.0,
        ..IdentityLine::within(
            "Dirichlet-form identity (N=4)",
            worst,
            1e-12,
            format!("min form {min_form:.3e}"),
        )
    })
}

/// Monte Carlo estimate of `E[xi^a_x(eta_t)]` with standard errors, per
/// time, site and species, from the uniform product initial law.
pub fn monte_carlo_occupation(
    params: &ModelParams,
    rates: RateTable,
    times: &[f64],
    replica_count: usize,
    seed: u64,
) -> Vec<Vec<[(f64, f64); 3]>> {
    let n = params.n;
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let runs = replicas(replica_count, seed, |_, s| {
        let mut rng = rng_for(s ^ 0x1);
        let init = sample_initial(|_| [1.0 / 3.0; 3], n, &mut rng).expect("uniform profile");
        simulate_with_rates(params, rates, init, t_end, times, s).expect("valid schedule")
    });
    let r = replica_count as f64;
    (0..times.len())
        .map(|k| {
            (0..n - 1)
                .map(|x| {
                    Species::ALL.map(|a| {
                        let hits = runs.iter().filter(|tr| tr.snapshots[k].occupancy[x] == a).count() as f64;
                        let p = hits / r;
                        (p, (p * (1.0 - p) / (r - 1.0)).sqrt())
                    })
                })
                .collect()
        })
        .collect()
}

/// Largest |z| of simulator occupations against the exact law.
pub fn check_monte_carlo(cfg: &SuiteConfig) -> Result<IdentityLine, OracleError> {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for &n in &cfg.mc_sizes {
        let (params, rates) = cfg.rates(n)?;
        let exact_params = params;
        let gen = build_generator(&RateTable::new(&exact_params), Parts::all())?;
        let space = gen.space;
        let p0 = ProductMeasure::uniform(n, [1.0 / 3.0; 3])?.weights(&space)?;
        let mc = monte_carlo_occupation(
            &params,
            rates,
            &cfg.mc_times,
            cfg.mc_replicas,
            cfg.seed ^ n as u64,
        );
        let mut worst_n = 0.0f64;
        for (k, &t) in cfg.mc_times.iter().enumerate() {
            for x in 0..n - 1 {
                for a in Species::ALL {
                    let obs: Vec<f64> = space.states().map(|o| f64::from(u8::from(o[x] == a))).collect();
                    let exact = exact_expectation(&gen, &p0, &obs, t)?;
                    let (mean, se) = mc[k][x][a.index()];
                    let z = if se > 0.0 {
                        (mean - exact).abs() / se
                    } else if mean == exact {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst_n = worst_n.max(z);
                }
            }
        }
        detail.push(format!("N={n} max|z|={worst_n:.2}"));
        worst = worst.max(worst_n);
    }
    Ok(IdentityLine::within(
        "Monte Carlo occupations vs exact law (z-score)",
        worst,
        3.0,
        format!("{} replicas; {}", cfg.mc_replicas, detail.join(", ")),
    ))
}

/// Runs every check in order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    Ok(SuiteReport {
        lines: vec![
            check_generators(cfg)?,
            check_expansion(cfg)?,
            check_adjoint(cfg, Side::Left)?,
            check_adjoint(cfg, Side::Right)?,
            check_entropy(cfg)?,
            check_dirichlet_forms(cfg)?,
            check_monte_carlo(cfg)?,
        ],
    })
}

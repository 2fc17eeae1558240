//! Distances between an empirical density profile and a PDE snapshot.

use serde::{Deserialize, Serialize};

use crate::empirical::DensityProfile;
use crate::pde::PdeSolution;
use crate::testfn::TestFunction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareNorm {
    /// `(1/N) sum_x sum_a |rho_emp - rho|` on the sites.
    L1,
    L2,
    /// L1 distance of averages over `bins` equal blocks of `[0, 1]`.
    BlockL1 {
        bins: usize,
    },
    /// Largest `|<pi^a, phi> - int phi rho^a|` over the preset test functions.
    SupPairing,
}

impl CompareNorm {
    pub fn label(&self) -> String {
        match self {
            CompareNorm::L1 => "L1".into(),
            CompareNorm::L2 => "L2".into(),
            CompareNorm::BlockL1 { bins } => format!("block-L1({bins})"),
            CompareNorm::SupPairing => "sup-pairing".into(),
        }
    }
}

/// PDE values at the profile's grid points, snapshot `k`.
pub fn pde_on_grid(sol: &PdeSolution<f64>, k: usize, grid: &[f64]) -> [Vec<f64>; 3] {
    let mut out: [Vec<f64>; 3] = Default::default();
    for u in grid {
        let v = sol.interpolate(k, *u);
        for a in 0..3 {
            out[a].push(v[a]);
        }
    }
    out
}

/// The PDE snapshot sampled at `x/N` as a profile without standard errors.
pub fn profile_from_solution(sol: &PdeSolution<f64>, k: usize, n: usize) -> DensityProfile {
    let grid: Vec<f64> = (1..n).map(|x| x as f64 / n as f64).collect();
    DensityProfile {
        values: pde_on_grid(sol, k, &grid),
        grid,
        stderr: None,
    }
}

fn distance(emp: &[Vec<f64>; 3], pde: &[Vec<f64>; 3], grid: &[f64], norm: CompareNorm) -> f64 {
    let sites = grid.len();
    let n = (sites + 1) as f64;
    match norm {
        CompareNorm::L1 => {
            (0..3)
                .map(|a| (0..sites).map(|i| (emp[a][i] - pde[a][i]).abs()).sum::<f64>())
                .sum::<f64>()
                / n
        }
        CompareNorm::L2 => ((0..3)
            .map(|a| (0..sites).map(|i| (emp[a][i] - pde[a][i]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n)
            .sqrt(),
        CompareNorm::BlockL1 { bins } => {
            let bins = bins.max(1);
            let mut sum = [vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]];
            let mut count = vec![0usize; bins];
            for (i, u) in grid.iter().enumerate() {
                let b = ((u * bins as f64) as usize).min(bins - 1);
                count[b] += 1;
                for a in 0..3 {
                    sum[a][b] += emp[a][i] - pde[a][i];
                }
            }
            (0..bins)
                .filter(|b| count[*b] > 0)
                .map(|b| (0..3).map(|a| (sum[a][b] / count[b] as f64).abs()).sum::<f64>())
                .sum::<f64>()
                / bins as f64
        }
        CompareNorm::SupPairing => {
            let family: Vec<TestFunction<f64>> = TestFunction::robin_family()
                .into_iter()
                .chain(TestFunction::dirichlet_family())
                .collect();
            family
                .iter()
                .flat_map(|phi| {
                    (0..3).map(move |a| {
                        (0..sites)
                            .map(|i| phi.spatial(grid[i]).0 * (emp[a][i] - pde[a][i]))
                            .sum::<f64>()
                            .abs()
                            / n
                    })
                })
                .fold(0.0, f64::max)
        }
    }
}

/// Error between the replica-mean profile and snapshot `k` of `sol`, with a
/// noise-floor estimate from the profile's standard errors (zero when absent).
pub fn compare_profile(
    profile: &DensityProfile,
    sol: &PdeSolution<f64>,
    k: usize,
    norm: CompareNorm,
) -> (f64, f64) {
    let pde = pde_on_grid(sol, k, &profile.grid);
    let err = distance(&profile.values, &pde, &profile.grid, norm);
    let noise = match &profile.stderr {
        None => 0.0,
        Some(se) => {
            let zero = [0, 1, 2].map(|_| vec![0.0; profile.len()]);
            match norm {
                // Independent sites: block means shrink by sqrt(sites per block).
                CompareNorm::BlockL1 { bins } => {
                    let per_bin = (profile.len() as f64 / bins.max(1) as f64).max(1.0);
                    distance(se, &zero, &profile.grid, CompareNorm::L1) * (profile.len() + 1) as f64
                        / profile.len() as f64
                        / per_bin.sqrt()
                }
                other => distance(se, &zero, &profile.grid, other),
            }
        }
    };
    (err, noise)
}

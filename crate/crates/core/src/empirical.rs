//! Empirical-measure functionals of a configuration.
//!
//! Occupancy slices hold sites `1..=N-1` at indices `0..N-1`, so `N` is
//! always `occupancy.len() + 1`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::rates::Side;
use crate::scalar::Scalar;
use crate::simulator::{EventKind, LatticeState, Trajectory};
use crate::species::{ModelParams, ReservoirDensities, Species};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmpiricalError {
    #[error("bond {x} outside 1..={max}")]
    BondOutOfRange { x: usize, max: usize },
    #[error("site {site} is not a boundary site (1 or {last})")]
    NotBoundarySite { site: usize, last: usize },
    #[error("box of size {len} {side} of {x} leaves the lattice 1..={last}")]
    BoxOutsideLattice {
        x: usize,
        len: usize,
        side: &'static str,
        last: usize,
    },
    #[error("insufficient snapshots for time quadrature: {0}")]
    InsufficientSnapshots(String),
    #[error("profile CSV: {0}")]
    Csv(String),
}

#[inline]
fn xi(occ: &[Species], x: usize, s: Species) -> bool {
    occ[x - 1] == s
}

#[inline]
fn ind<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

#[inline]
fn lattice_n(occ: &[Species]) -> usize {
    occ.len() + 1
}

/// `(1/N) sum_x phi(x/N) xi^alpha_x`.
pub fn pair_empirical<T: Scalar>(occ: &[Species], phi: impl Fn(T) -> T, alpha: Species) -> T {
    let n = T::lit(lattice_n(occ) as f64);
    let sum: T = occ
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == alpha)
        .map(|(i, _)| phi(T::lit((i + 1) as f64) / n))
        .sum();
    sum / n
}

/// Which side of `x` a block average looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxSide {
    /// Sites `x+1 ..= x+len`.
    Right,
    /// Sites `x-len ..= x-1`.
    Left,
}

/// Density of `alpha` in a box of `len` sites next to `x`. The box must lie
/// inside the lattice; nothing is clamped.
pub fn block_average<T: Scalar>(
    occ: &[Species],
    x: usize,
    len: usize,
    alpha: Species,
    side: BoxSide,
) -> Result<T, EmpiricalError> {
    let last = occ.len();
    let range = match side {
        BoxSide::Right if len >= 1 && x + len <= last => (x + 1)..=(x + len),
        BoxSide::Left if len >= 1 && x > len && x - 1 <= last => (x - len)..=(x - 1),
        _ => {
            return Err(EmpiricalError::BoxOutsideLattice {
                x,
                len,
                side: if side == BoxSide::Right { "right" } else { "left" },
                last,
            })
        }
    };
    let count = range.filter(|y| xi(occ, *y, alpha)).count();
    Ok(T::lit(count as f64) / T::lit(len as f64))
}

/// Bulk current observable
/// `(1/2)[xi^a_{x+1}(xi^{a+1}_x - xi^{a+2}_x) + xi^a_x(xi^{a+1}_{x+1} - xi^{a+2}_{x+1})]`.
pub fn g_bulk<T: Scalar>(occ: &[Species], x: usize, alpha: Species) -> Result<T, EmpiricalError> {
    let max = occ.len().saturating_sub(1);
    if x == 0 || x > max {
        return Err(EmpiricalError::BondOutOfRange { x, max });
    }
    Ok(g_pair(occ[x - 1], occ[x], alpha))
}

#[inline]
fn g_pair<T: Scalar>(left: Species, right: Species, alpha: Species) -> T {
    let a1 = alpha.cyclic_next(1);
    let a2 = alpha.cyclic_next(2);
    let x_term = ind::<T>(right == alpha) * (ind::<T>(left == a1) - ind::<T>(left == a2));
    let y_term = ind::<T>(left == alpha) * (ind::<T>(right == a1) - ind::<T>(right == a2));
    T::lit(0.5) * (x_term + y_term)
}

fn boundary_side(occ: &[Species], site: usize) -> Result<Side, EmpiricalError> {
    let last = occ.len();
    if site == 1 {
        Ok(Side::Left)
    } else if site == last {
        Ok(Side::Right)
    } else {
        Err(EmpiricalError::NotBoundarySite { site, last })
    }
}

/// Symmetric boundary observable `r_alpha - xi^alpha_site`; pass the left
/// triple for site 1 and the right triple for site N-1.
pub fn f_boundary<T: Scalar>(
    occ: &[Species],
    site: usize,
    alpha: Species,
    r: &ReservoirDensities,
) -> Result<T, EmpiricalError> {
    boundary_side(occ, site)?;
    Ok(T::lit(r.get(alpha)) - ind::<T>(xi(occ, site, alpha)))
}

/// Unsimplified form
/// `(-r_{a+1} - r_{a+2}) xi^a + r_a xi^{a+1} + r_a xi^{a+2}`.
pub fn f_boundary_expanded<T: Scalar>(
    occ: &[Species],
    site: usize,
    alpha: Species,
    r: &ReservoirDensities,
) -> Result<T, EmpiricalError> {
    boundary_side(occ, site)?;
    let s = occ[site - 1];
    let (a1, a2) = (alpha.cyclic_next(1), alpha.cyclic_next(2));
    let ra = T::lit(r.get(alpha));
    Ok(T::lit(-r.get(a1) - r.get(a2)) * ind::<T>(s == alpha)
        + ra * ind::<T>(s == a1)
        + ra * ind::<T>(s == a2))
}

/// Asymmetric boundary observable. Left:
/// `(1/2)[(2r_{a+2} - 1) xi^a - 2 r_a xi^{a+1} + r_a]`; right:
/// `(1/2)[(1 - 2r_{a+2}) xi^a + 2 r_a xi^{a+1} - r_a]` with the right triple.
pub fn h_boundary<T: Scalar>(
    occ: &[Species],
    site: usize,
    alpha: Species,
    r: &ReservoirDensities,
) -> Result<T, EmpiricalError> {
    let side = boundary_side(occ, site)?;
    let s = occ[site - 1];
    let (a1, a2) = (alpha.cyclic_next(1), alpha.cyclic_next(2));
    let ra = r.get(alpha);
    let left = (2.0 * r.get(a2) - 1.0) * f64::from(u8::from(s == alpha))
        - 2.0 * ra * f64::from(u8::from(s == a1))
        + ra;
    let v = match side {
        Side::Left => 0.5 * left,
        Side::Right => -0.5 * left,
    };
    Ok(T::lit(v))
}

/// Unsimplified form. Left:
/// `(1/2)[(r_{a+2} - r_{a+1}) xi^a - r_a xi^{a+1} + r_a xi^{a+2}]`; right:
/// `(1/2)[(r_{a+1} - r_{a+2}) xi^a + r_a xi^{a+1} - r_a xi^{a+2}]`.
pub fn h_boundary_expanded<T: Scalar>(
    occ: &[Species],
    site: usize,
    alpha: Species,
    r: &ReservoirDensities,
) -> Result<T, EmpiricalError> {
    let side = boundary_side(occ, site)?;
    let s = occ[site - 1];
    let (a1, a2) = (alpha.cyclic_next(1), alpha.cyclic_next(2));
    let ra = r.get(alpha);
    let on = |b: bool| f64::from(u8::from(b));
    let left = (r.get(a2) - r.get(a1)) * on(s == alpha) - ra * on(s == a1) + ra * on(s == a2);
    let v = match side {
        Side::Left => 0.5 * left,
        Side::Right => -0.5 * left,
    };
    Ok(T::lit(v))
}

/// Site and bond weights of the generator expansion for a fixed spatial
/// function, so the drift can be updated locally after each jump.
#[derive(Clone, Debug)]
struct ExpansionWeights {
    n: usize,
    alpha: Species,
    /// `Delta_N phi(x/N) / N` for x = 1..=N-1, indexed by x.
    lap: Vec<f64>,
    /// `-(beta/N) grad_N phi(x/N)` for bonds x = 1..=N-2, indexed by x.
    bond: Vec<f64>,
    /// `phi(x/N)/N`, indexed by x = 0..=N.
    pair: Vec<f64>,
    grad_left: f64,
    grad_right: f64,
    /// `N^{1-delta} phi(1/N)` and its right counterpart.
    f_left: f64,
    f_right: f64,
    /// `beta_tilde N^{1-theta} phi(1/N)` and its right counterpart.
    h_left: f64,
    h_right: f64,
    left: ReservoirDensities,
    right: ReservoirDensities,
}

impl ExpansionWeights {
    fn new(phi: impl Fn(f64) -> f64, alpha: Species, params: &ModelParams) -> Self {
        let n = params.n;
        let nf = n as f64;
        let vals: Vec<f64> = (0..=n).map(|x| phi(x as f64 / nf)).collect();
        let grad = |x: usize| nf * (vals[x + 1] - vals[x]);
        let mut lap = vec![0.0; n];
        for x in 1..n {
            lap[x] = nf * (vals[x + 1] - 2.0 * vals[x] + vals[x - 1]);
        }
        let mut bond = vec![0.0; n - 1];
        for x in 1..n - 1 {
            bond[x] = -(params.beta / nf) * grad(x);
        }
        let f_scale = nf.powf(1.0 - params.delta);
        let h_scale = params.beta_tilde * nf.powf(1.0 - params.theta);
        ExpansionWeights {
            n,
            alpha,
            lap,
            bond,
            pair: vals.iter().map(|v| v / nf).collect(),
            grad_left: grad(0),
            grad_right: grad(n - 1),
            f_left: f_scale * vals[1],
            f_right: f_scale * vals[n - 1],
            h_left: h_scale * vals[1],
            h_right: h_scale * vals[n - 1],
            left: params.left,
            right: params.right,
        }
    }

    /// Terms of the drift depending on site `x` only.
    fn site_term(&self, occ: &[Species], x: usize) -> f64 {
        let a = self.alpha;
        let on = f64::from(u8::from(occ[x - 1] == a));
        let mut v = on * self.lap[x];
        let last = self.n - 1;
        if x == 1 {
            v += on * self.grad_left;
            v += self.f_left * f_boundary::<f64>(occ, 1, a, &self.left).unwrap_or(0.0);
            v += self.h_left * h_boundary::<f64>(occ, 1, a, &self.left).unwrap_or(0.0);
        }
        if x == last {
            v -= on * self.grad_right;
            v += self.f_right * f_boundary::<f64>(occ, last, a, &self.right).unwrap_or(0.0);
            v += self.h_right * h_boundary::<f64>(occ, last, a, &self.right).unwrap_or(0.0);
        }
        v
    }

    fn bond_term(&self, occ: &[Species], x: usize) -> f64 {
        if x == 0 || x > self.n - 2 {
            return 0.0;
        }
        self.bond[x] * g_pair::<f64>(occ[x - 1], occ[x], self.alpha)
    }

    fn drift(&self, occ: &[Species]) -> f64 {
        let sites: f64 = (1..self.n).map(|x| self.site_term(occ, x)).sum();
        let bonds: f64 = (1..self.n - 1).map(|x| self.bond_term(occ, x)).sum();
        sites + bonds
    }

    fn pairing(&self, occ: &[Species]) -> f64 {
        (1..self.n)
            .filter(|x| occ[x - 1] == self.alpha)
            .map(|x| self.pair[x])
            .sum()
    }

    /// Contribution of every term touching the sites changed by `kind`.
    fn local(&self, occ: &[Species], kind: EventKind) -> (f64, f64) {
        let (lo, hi) = match kind {
            EventKind::BondSwap(x) => (x, x + 1),
            EventKind::BoundaryFlip { site, .. } => (site, site),
        };
        let mut drift = 0.0;
        let mut pair = 0.0;
        for x in lo..=hi {
            drift += self.site_term(occ, x);
            if occ[x - 1] == self.alpha {
                pair += self.pair[x];
            }
        }
        for b in lo.saturating_sub(1)..=hi {
            drift += self.bond_term(occ, b);
        }
        (drift, pair)
    }
}

/// `N^2 L_N <pi^alpha, phi>` evaluated through the Dynkin expansion:
/// discrete-Laplacian bulk term, the `-(beta/N) sum grad phi g` current term,
/// the `N^{1-delta}` reservoir term in `f`, the boundary-gradient term and the
/// `beta_tilde N^{1-theta}` term in `h`.
pub fn generator_action<T: Scalar>(
    occ: &[Species],
    phi: impl Fn(T) -> T,
    alpha: Species,
    params: &ModelParams,
) -> T {
    let w = ExpansionWeights::new(|u| phi(T::lit(u)).as_f64(), alpha, params);
    debug_assert_eq!(w.n, lattice_n(occ));
    T::lit(w.drift(occ))
}

/// Martingale `M_t = <pi_t, phi_t> - <pi_0, phi_0> - int_0^t (N^2 L + d/ds) <pi_s, phi_s> ds`
/// accumulated exactly along a simulated path.
///
/// For `phi = exp(-lambda s) psi(u)` the integrand on a holding interval is
/// `exp(-lambda s) (drift_psi(eta) - lambda <pi, psi>)`, integrated in closed
/// form. `drift_psi` and `<pi, psi>` are updated locally after every jump.
#[derive(Clone, Debug)]
pub struct DynkinTracker {
    weights: ExpansionWeights,
    decay: f64,
    drift: f64,
    pairing: f64,
    initial: f64,
    integral: f64,
    pending: (f64, f64),
}

impl DynkinTracker {
    pub fn new(phi: &TestFunction<f64>, alpha: Species, params: &ModelParams, occ: &[Species]) -> Self {
        let weights = ExpansionWeights::new(|u| phi.spatial(u).0, alpha, params);
        let drift = weights.drift(occ);
        let pairing = weights.pairing(occ);
        DynkinTracker {
            weights,
            decay: phi.decay,
            drift,
            pairing,
            initial: pairing,
            integral: 0.0,
            pending: (0.0, 0.0),
        }
    }

    fn time_weight(&self, t0: f64, t1: f64) -> f64 {
        if self.decay == 0.0 {
            t1 - t0
        } else {
            ((-self.decay * t0).exp() - (-self.decay * t1).exp()) / self.decay
        }
    }

    pub fn hold(&mut self, t0: f64, t1: f64) {
        let w = self.time_weight(t0, t1);
        self.integral += w * (self.drift - self.decay * self.pairing);
    }

    pub fn before_event(&mut self, occ: &[Species], kind: EventKind) {
        self.pending = self.weights.local(occ, kind);
    }

    pub fn after_event(&mut self, occ: &[Species], kind: EventKind) {
        let (d, p) = self.weights.local(occ, kind);
        self.drift += d - self.pending.0;
        self.pairing += p - self.pending.1;
    }

    /// Current drift `N^2 L_N <pi, psi>`.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// `M_t` at the current time `t`.
    pub fn residual(&self, t: f64) -> f64 {
        (-self.decay * t).exp() * self.pairing - self.initial - self.integral
    }

    /// Recomputes drift and pairing from scratch and returns the largest
    /// deviation from the incrementally maintained values.
    pub fn drift_error(&self, occ: &[Species]) -> f64 {
        (self.weights.drift(occ) - self.drift)
            .abs()
            .max((self.weights.pairing(occ) - self.pairing).abs())
    }
}

/// Adapter feeding a [`DynkinTracker`] from a running simulation.
impl crate::simulator::SimObserver for DynkinTracker {
    fn hold(&mut self, _state: &LatticeState, t0: f64, t1: f64) {
        DynkinTracker::hold(self, t0, t1);
    }

    fn before_event(&mut self, state: &LatticeState, kind: EventKind) {
        DynkinTracker::before_event(self, state.occupancy(), kind);
    }

    fn after_event(&mut self, state: &LatticeState, kind: EventKind) {
        DynkinTracker::after_event(self, state.occupancy(), kind);
    }
}

/// Dynkin residual from stored snapshots with the trapezoid rule in time.
/// Snapshots must start at 0, end at `t`, and no gap may exceed `max_gap`.
pub fn dynkin_residual(
    traj: &Trajectory,
    phi: &TestFunction<f64>,
    alpha: Species,
    params: &ModelParams,
    t: f64,
    max_gap: f64,
) -> Result<f64, EmpiricalError> {
    let snaps: Vec<_> = traj.snapshots.iter().filter(|s| s.time <= t).collect();
    if snaps.len() < 2 {
        return Err(EmpiricalError::InsufficientSnapshots(format!(
            "{} snapshot(s) in [0, {t}]",
            snaps.len()
        )));
    }
    if snaps[0].time != 0.0 || snaps[snaps.len() - 1].time != t {
        return Err(EmpiricalError::InsufficientSnapshots(format!(
            "snapshots span [{}, {}], need [0, {t}]",
            snaps[0].time,
            snaps[snaps.len() - 1].time
        )));
    }
    let integrand = |occ: &[Species], s: f64| {
        generator_action::<f64>(occ, phi.at(s), alpha, params)
            + pair_empirical::<f64>(occ, |u| phi.dt(s, u), alpha)
    };
    let mut integral = 0.0;
    for w in snaps.windows(2) {
        let gap = w[1].time - w[0].time;
        if gap > max_gap {
            return Err(EmpiricalError::InsufficientSnapshots(format!(
                "gap {gap} between {} and {} exceeds {max_gap}",
                w[0].time, w[1].time
            )));
        }
        integral +=
            0.5 * gap * (integrand(&w[0].occupancy, w[0].time) + integrand(&w[1].occupancy, w[1].time));
    }
    let first = snaps[0];
    let last = snaps[snaps.len() - 1];
    Ok(pair_empirical::<f64>(&last.occupancy, phi.at(t), alpha)
        - pair_empirical::<f64>(&first.occupancy, phi.at(0.0), alpha)
        - integral)
}

/// Per-species density profile on the grid `x/N`, `x = 1..N-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    pub grid: Vec<f64>,
    pub values: [Vec<f64>; 3],
    pub stderr: Option<[Vec<f64>; 3]>,
}

impl DensityProfile {
    /// Indicator profile of one configuration.
    pub fn from_occupancy(occ: &[Species]) -> Self {
        Self::replica_mean(&[occ])
    }

    /// Replica mean with standard errors `sd / sqrt(R)` (zero for `R = 1`).
    pub fn replica_mean<S: AsRef<[Species]>>(configs: &[S]) -> Self {
        assert!(
            !configs.is_empty(),
            "replica_mean needs at least one configuration"
        );
        let sites = configs[0].as_ref().len();
        let n = sites + 1;
        let r = configs.len() as f64;
        let mut counts = [vec![0usize; sites], vec![0usize; sites], vec![0usize; sites]];
        for c in configs {
            for (i, s) in c.as_ref().iter().enumerate() {
                counts[s.index()][i] += 1;
            }
        }
        let values = counts
            .clone()
            .map(|c| c.iter().map(|k| *k as f64 / r).collect::<Vec<_>>());
        let stderr = if configs.len() > 1 {
            Some(values.clone().map(|v| {
                v.iter()
                    .map(|p| (p * (1.0 - p) * r / (r - 1.0)).max(0.0).sqrt() / r.sqrt())
                    .collect()
            }))
        } else {
            None
        };
        DensityProfile {
            grid: (1..n).map(|x| x as f64 / n as f64).collect(),
            values,
            stderr,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Largest `|sum_alpha value - 1|` over the grid.
    pub fn max_sum_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.values[0][i] + self.values[1][i] + self.values[2][i] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `u,rho_A,rho_B,rho_E` and, when present,
    /// `stderr_A,stderr_B,stderr_E`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,rho_A,rho_B,rho_E");
        if self.stderr.is_some() {
            out.push_str(",stderr_A,stderr_B,stderr_E");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(
                out,
                "{},{},{},{}",
                self.grid[i], self.values[0][i], self.values[1][i], self.values[2][i]
            );
            if let Some(se) = &self.stderr {
                let _ = write!(out, ",{},{},{}", se[0][i], se[1][i], se[2][i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EmpiricalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| EmpiricalError::Csv("empty input".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let with_err = match cols.as_slice() {
            ["u", "rho_A", "rho_B", "rho_E"] => false,
            ["u", "rho_A", "rho_B", "rho_E", "stderr_A", "stderr_B", "stderr_E"] => true,
            _ => return Err(EmpiricalError::Csv(format!("unexpected header {header:?}"))),
        };
        let mut grid = Vec::new();
        let mut values: [Vec<f64>; 3] = Default::default();
        let mut stderr: [Vec<f64>; 3] = Default::default();
        for (k, line) in lines.enumerate() {
            let nums = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmpiricalError::Csv(format!("row {}: {e}", k + 2)))?;
            if nums.len() != cols.len() {
                return Err(EmpiricalError::Csv(format!(
                    "row {} has {} fields",
                    k + 2,
                    nums.len()
                )));
            }
            grid.push(nums[0]);
            for a in 0..3 {
                values[a].push(nums[1 + a]);
                if with_err {
                    stderr[a].push(nums[4 + a]);
                }
            }
        }
        Ok(DensityProfile {
            grid,
            values,
            stderr: with_err.then_some(stderr),
        })
    }
}

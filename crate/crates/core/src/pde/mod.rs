//! Finite-volume solver for the coupled hydrodynamic system
//! `d_t rho^a = d_u F^a`, `F^a = d_u rho^a + beta rho^a (rho^{a+1} - rho^{a+2})`,
//! with Dirichlet or Robin boundary data.
//!
//! Cells are `[(i-1)h, ih]` with centers `(i - 1/2)h`. Forward Euler in time.
//! While marching, the solver keeps `exp(-lambda s)`-weighted time integrals
//! of the cell values, the nonlinear drift and the boundary values, so weak
//! residuals against separable test functions need no stored history.

mod energy;
mod residual;

pub use energy::{energy_v, energy_w, fit_exponential_rate, gronwall_rate, EnergySeries};
pub use residual::{weak_residual, weak_residual_dirichlet, weak_residual_robin};

use std::fmt::Write as _;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::species::{ModelParams, ParamError, RegimeKind, RegimeSpec};

/// Values may leave `[0, 1]` by at most this much before the solver aborts.
pub const CLIP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("grid needs at least 8 cells, got {0}")]
    GridTooSmall(usize),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("initial data at u = {u}: {reason}")]
    InitialData { u: f64, reason: String },
    #[error("non-finite value in species {species} cell {cell} at t = {t}")]
    NonFinite { species: usize, cell: usize, t: f64 },
    #[error("species {species} cell {cell} left [0,1] at t = {t}: {value}")]
    OutOfRange {
        species: usize,
        cell: usize,
        t: f64,
        value: f64,
    },
    #[error("time {0} is not a stored output time")]
    TimeNotStored(f64),
    #[error("decay rate {0} was not tracked by the solver")]
    DecayNotTracked(f64),
    #[error("test function is not compactly supported in (0,1)")]
    NotCompactlySupported,
    #[error("solutions are not comparable: {0}")]
    Mismatch(String),
}

/// Uniform cell-centered grid on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D<T> {
    m: usize,
    h: T,
}

impl<T: Scalar> Grid1D<T> {
    pub fn new(m: usize) -> Result<Self, PdeError> {
        if m < 8 {
            return Err(PdeError::GridTooSmall(m));
        }
        Ok(Grid1D {
            m,
            h: T::one() / T::lit(m as f64),
        })
    }

    pub fn cells(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn center(&self, i: usize) -> T {
        (T::lit(i as f64) + T::lit(0.5)) * self.h
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.m).map(|i| self.center(i)).collect()
    }
}

/// Cell averages of the three densities.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTriple<T> {
    pub rho: [Vec<T>; 3],
}

impl<T: Scalar> FieldTriple<T> {
    /// Samples `profile` at the cell centers.
    pub fn from_profile(grid: &Grid1D<T>, profile: impl Fn(T) -> [T; 3]) -> Self {
        let mut rho: [Vec<T>; 3] = Default::default();
        for u in grid.centers() {
            let v = profile(u);
            for a in 0..3 {
                rho[a].push(v[a]);
            }
        }
        FieldTriple { rho }
    }

    pub fn constant(grid: &Grid1D<T>, c: [T; 3]) -> Self {
        Self::from_profile(grid, |_| c)
    }

    pub fn cells(&self) -> usize {
        self.rho[0].len()
    }

    pub fn at(&self, i: usize) -> [T; 3] {
        [self.rho[0][i], self.rho[1][i], self.rho[2][i]]
    }

    /// `max_i |sum_a rho^a_i - 1|`.
    pub fn max_sum_defect(&self) -> T {
        (0..self.cells())
            .map(|i| (self.rho[0][i] + self.rho[1][i] + self.rho[2][i] - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// `int rho^a du` by the midpoint rule.
    pub fn mass(&self, h: T) -> [T; 3] {
        [0, 1, 2].map(|a| self.rho[a].iter().copied().sum::<T>() * h)
    }

    /// Linear extrapolation of the first two and last two cells to `u = 0` and `u = 1`.
    pub fn extrapolated_boundary(&self) -> ([T; 3], [T; 3]) {
        let m = self.cells();
        let (c1, c2) = (T::lit(1.5), T::lit(0.5));
        (
            [0, 1, 2].map(|a| c1 * self.rho[a][0] - c2 * self.rho[a][1]),
            [0, 1, 2].map(|a| c1 * self.rho[a][m - 1] - c2 * self.rho[a][m - 2]),
        )
    }

    fn check(&self, t: T) -> Result<(), PdeError> {
        let lo = -T::lit(CLIP_TOLERANCE);
        let hi = T::one() + T::lit(CLIP_TOLERANCE);
        for (a, v) in self.rho.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(PdeError::NonFinite {
                        species: a,
                        cell: i,
                        t: t.as_f64(),
                    });
                }
                if *x < lo || *x > hi {
                    return Err(PdeError::OutOfRange {
                        species: a,
                        cell: i,
                        t: t.as_f64(),
                        value: x.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Coefficients of the macroscopic problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdeProblem<T> {
    pub beta: T,
    pub left: [T; 3],
    pub right: [T; 3],
    pub regime: RegimeSpec,
}

impl<T: Scalar> PdeProblem<T> {
    /// Problem in the regime selected by `(theta, delta, beta_tilde)`.
    pub fn from_model(p: &ModelParams) -> Result<Self, PdeError> {
        let regime = p.regime()?;
        Ok(Self::with_regime(p, regime))
    }

    pub fn with_regime(p: &ModelParams, regime: RegimeSpec) -> Self {
        PdeProblem {
            beta: T::lit(p.beta),
            left: p.left.as_array().map(T::lit),
            right: p.right.as_array().map(T::lit),
            regime,
        }
    }

    fn kappas(&self) -> (T, T) {
        (T::lit(self.regime.kappa1), T::lit(self.regime.kappa2))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T> {
    pub m: usize,
    /// `dt = safety * h^2 / (2 + beta h)`.
    pub safety: T,
    pub t_end: T,
    /// Snapshot times; `0` and `t_end` are always added.
    pub outputs: Vec<T>,
    /// Decay rates `lambda` of the weighted time integrals kept for residuals.
    pub decays: Vec<T>,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(m: usize, t_end: T) -> Self {
        SolverConfig {
            m,
            safety: T::lit(0.4),
            t_end,
            outputs: Vec::new(),
            decays: vec![T::zero(), T::one()],
        }
    }

    /// `k + 1` equally spaced snapshot times on `[0, t_end]`.
    pub fn with_uniform_outputs(mut self, k: usize) -> Self {
        self.outputs = (0..=k)
            .map(|i| self.t_end * T::lit(i as f64) / T::lit(k.max(1) as f64))
            .collect();
        self
    }

    pub fn time_step(&self, beta: T) -> T {
        let h = T::one() / T::lit(self.m as f64);
        self.safety * h * h / (T::lit(2.0) + beta.abs() * h)
    }

    fn validate(&self) -> Result<(), PdeError> {
        if self.m < 8 {
            return Err(PdeError::GridTooSmall(self.m));
        }
        if !(self.safety > T::zero() && self.safety <= T::one()) {
            return Err(PdeError::Config(format!("safety {} outside (0, 1]", self.safety)));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(PdeError::Config(format!("t_end = {}", self.t_end)));
        }
        if let Some(t) = self
            .outputs
            .iter()
            .find(|t| !(**t >= T::zero() && **t <= self.t_end))
        {
            return Err(PdeError::Config(format!(
                "output time {t} outside [0, {}]",
                self.t_end
            )));
        }
        if let Some(l) = self.decays.iter().find(|l| !l.is_finite()) {
            return Err(PdeError::Config(format!("decay rate {l}")));
        }
        Ok(())
    }
}

/// Running integrals `int_0^t exp(-lambda s) X(s) ds` for one decay rate.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedIntegrals<T> {
    pub decay: T,
    /// Cell values.
    pub rho: [Vec<T>; 3],
    /// `rho^a (rho^{a+1} - rho^{a+2})` per cell.
    pub drift: [Vec<T>; 3],
    /// Boundary values at `u = 0` and `u = 1` (extrapolated, or the Dirichlet data).
    pub left: [T; 3],
    pub right: [T; 3],
    /// `int exp(-lambda s) ds` as accumulated.
    pub weight: T,
}

impl<T: Scalar> WeightedIntegrals<T> {
    fn zero(decay: T, m: usize) -> Self {
        WeightedIntegrals {
            decay,
            rho: Default::default(),
            drift: Default::default(),
            left: [T::zero(); 3],
            right: [T::zero(); 3],
            weight: T::zero(),
        }
        .sized(m)
    }

    fn sized(mut self, m: usize) -> Self {
        for a in 0..3 {
            self.rho[a] = vec![T::zero(); m];
            self.drift[a] = vec![T::zero(); m];
        }
        self
    }

    /// Adds `c * exp(-lambda t) * X(t)`.
    fn add(&mut self, c: T, t: T, f: &FieldTriple<T>, bv: &([T; 3], [T; 3])) {
        let w = c * (-self.decay * t).exp();
        let m = f.cells();
        for a in 0..3 {
            let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
            let (r, r1, r2) = (&f.rho[a], &f.rho[a1], &f.rho[a2]);
            let (ir, id) = (&mut self.rho[a], &mut self.drift[a]);
            for i in 0..m {
                ir[i] += w * r[i];
                id[i] += w * r[i] * (r1[i] - r2[i]);
            }
            self.left[a] += w * bv.0[a];
            self.right[a] += w * bv.1[a];
        }
        self.weight += w;
    }
}

/// Time-marched solution with snapshots and weighted integrals at each output time.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeSolution<T> {
    pub grid: Grid1D<T>,
    pub problem: PdeProblem<T>,
    pub times: Vec<T>,
    pub fields: Vec<FieldTriple<T>>,
    /// `integrals[k][j]`: decay rate `j` integrated up to `times[k]`.
    pub integrals: Vec<Vec<WeightedIntegrals<T>>>,
    pub dt: T,
    pub steps: usize,
}

impl<T: Scalar> PdeSolution<T> {
    /// Index of the snapshot at time `t` (relative tolerance 1e-9).
    pub fn index_of(&self, t: T) -> Result<usize, PdeError> {
        let tol = T::lit(1e-9) * (T::one() + t.abs());
        self.times
            .iter()
            .position(|s| (*s - t).abs() <= tol)
            .ok_or(PdeError::TimeNotStored(t.as_f64()))
    }

    pub fn at_time(&self, t: T) -> Result<&FieldTriple<T>, PdeError> {
        Ok(&self.fields[self.index_of(t)?])
    }

    pub fn final_fields(&self) -> &FieldTriple<T> {
        self.fields
            .last()
            .expect("solution has at least the initial snapshot")
    }

    /// Largest `|sum_a rho^a - 1|` over all snapshots.
    pub fn max_sum_defect(&self) -> T {
        self.fields
            .iter()
            .map(|f| f.max_sum_defect())
            .fold(T::zero(), T::max)
    }

    /// Boundary values used by the fluxes: the data for Dirichlet, linear
    /// extrapolation for Robin.
    pub fn boundary_values(&self, k: usize) -> ([T; 3], [T; 3]) {
        boundary_values(&self.fields[k], &self.problem)
    }

    /// Piecewise-linear interpolant through the cell centers and the boundary
    /// values, evaluated at `u` for snapshot `k`.
    pub fn interpolate(&self, k: usize, u: T) -> [T; 3] {
        let f = &self.fields[k];
        let (b0, b1) = self.boundary_values(k);
        let h = self.grid.h();
        let m = self.grid.cells();
        let s = u / h - T::lit(0.5);
        if s <= T::zero() {
            let w = (u / (h * T::lit(0.5))).max(T::zero()).min(T::one());
            return [0, 1, 2].map(|a| b0[a] + w * (f.rho[a][0] - b0[a]));
        }
        let last = T::lit((m - 1) as f64);
        if s >= last {
            let w = ((s - last) * T::lit(2.0)).max(T::zero()).min(T::one());
            return [0, 1, 2].map(|a| f.rho[a][m - 1] + w * (b1[a] - f.rho[a][m - 1]));
        }
        let i = s.floor().to_usize().unwrap_or(0).min(m - 2);
        let w = s - T::lit(i as f64);
        [0, 1, 2].map(|a| f.rho[a][i] + w * (f.rho[a][i + 1] - f.rho[a][i]))
    }

    /// CSV with columns `time,u,rho_A,rho_B,rho_E`, one row per snapshot and cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,u,rho_A,rho_B,rho_E\n");
        let centers = self.grid.centers();
        for (t, f) in self.times.iter().zip(&self.fields) {
            for (i, u) in centers.iter().enumerate() {
                let _ = writeln!(out, "{t},{u},{},{},{}", f.rho[0][i], f.rho[1][i], f.rho[2][i]);
            }
        }
        out
    }
}

fn boundary_values<T: Scalar>(f: &FieldTriple<T>, p: &PdeProblem<T>) -> ([T; 3], [T; 3]) {
    match p.regime.kind {
        RegimeKind::Dirichlet => (p.left, p.right),
        RegimeKind::Robin => f.extrapolated_boundary(),
    }
}

/// Interior-face flux between cells with values `l` and `r`.
#[inline]
fn face_flux<T: Scalar>(l: [T; 3], r: [T; 3], beta: T, h: T) -> [T; 3] {
    let half = T::lit(0.5);
    let avg = [0, 1, 2].map(|a| half * (l[a] + r[a]));
    [0, 1, 2].map(|a| (r[a] - l[a]) / h + beta * avg[a] * (avg[(a + 1) % 3] - avg[(a + 2) % 3]))
}

/// `F^a` at the interior face between cells `face - 1` and `face` (`1 <= face < M`).
pub fn numerical_flux<T: Scalar>(f: &FieldTriple<T>, beta: T, h: T, face: usize) -> [T; 3] {
    face_flux(f.at(face - 1), f.at(face), beta, h)
}

/// Robin bracket multiplying `kappa1` at the left end:
/// `(2r_{a+2} - 1) rho^a(0) - 2 r_a rho^{a+1}(0) + r_a`.
pub fn robin_bracket_left<T: Scalar>(rho0: [T; 3], r: [T; 3]) -> [T; 3] {
    let two = T::lit(2.0);
    [0, 1, 2].map(|a| (two * r[(a + 2) % 3] - T::one()) * rho0[a] - two * r[a] * rho0[(a + 1) % 3] + r[a])
}

/// Right-end bracket: `(1 - 2r~_{a+2}) rho^a(1) + 2 r~_a rho^{a+1}(1) - r~_a`.
pub fn robin_bracket_right<T: Scalar>(rho1: [T; 3], r: [T; 3]) -> [T; 3] {
    robin_bracket_left(rho1, r).map(|v| -v)
}

/// Which end of `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Left,
    Right,
}

/// Total flux `F^a` through `u = 0` or `u = 1`.
pub fn boundary_flux<T: Scalar>(f: &FieldTriple<T>, end: End, p: &PdeProblem<T>, h: T) -> [T; 3] {
    let m = f.cells();
    match p.regime.kind {
        RegimeKind::Dirichlet => match end {
            End::Left => {
                let ghost = [0, 1, 2].map(|a| T::lit(2.0) * p.left[a] - f.rho[a][0]);
                face_flux(ghost, f.at(0), p.beta, h)
            }
            End::Right => {
                let ghost = [0, 1, 2].map(|a| T::lit(2.0) * p.right[a] - f.rho[a][m - 1]);
                face_flux(f.at(m - 1), ghost, p.beta, h)
            }
        },
        RegimeKind::Robin => {
            let (k1, k2) = p.kappas();
            let (b0, b1) = f.extrapolated_boundary();
            match end {
                End::Left => {
                    let br = robin_bracket_left(b0, p.left);
                    [0, 1, 2].map(|a| -k1 * br[a] - k2 * (p.left[a] - b0[a]))
                }
                End::Right => {
                    let br = robin_bracket_right(b1, p.right);
                    [0, 1, 2].map(|a| k1 * br[a] + k2 * (p.right[a] - b1[a]))
                }
            }
        }
    }
}

/// One forward-Euler step `rho_i += (dt/h)(F_{i+1/2} - F_{i-1/2})`, written into `out`.
pub fn step_explicit_into<T: Scalar>(
    f: &FieldTriple<T>,
    p: &PdeProblem<T>,
    h: T,
    dt: T,
    out: &mut FieldTriple<T>,
    faces: &mut Vec<[T; 3]>,
) {
    let m = f.cells();
    faces.clear();
    faces.push(boundary_flux(f, End::Left, p, h));
    for face in 1..m {
        faces.push(numerical_flux(f, p.beta, h, face));
    }
    faces.push(boundary_flux(f, End::Right, p, h));
    let c = dt / h;
    for a in 0..3 {
        let (src, dst) = (&f.rho[a], &mut out.rho[a]);
        dst.resize(m, T::zero());
        for i in 0..m {
            dst[i] = src[i] + c * (faces[i + 1][a] - faces[i][a]);
        }
    }
}

/// One checked forward-Euler step.
pub fn step_explicit<T: Scalar>(
    f: &FieldTriple<T>,
    p: &PdeProblem<T>,
    h: T,
    dt: T,
    t: T,
) -> Result<FieldTriple<T>, PdeError> {
    let limit = T::lit(0.5) * h * h;
    if !(dt > T::zero()) || dt > limit {
        return Err(PdeError::Config(format!(
            "time step {dt} violates the stability limit {limit}"
        )));
    }
    let mut out = f.clone();
    step_explicit_into(f, p, h, dt, &mut out, &mut Vec::new());
    out.check(t + dt)?;
    Ok(out)
}

/// Marches `initial` to `config.t_end`.
pub fn solve<T: Scalar>(
    initial: FieldTriple<T>,
    problem: &PdeProblem<T>,
    config: &SolverConfig<T>,
) -> Result<PdeSolution<T>, PdeError> {
    config.validate()?;
    let grid = Grid1D::<T>::new(config.m)?;
    if initial.cells() != grid.cells() {
        return Err(PdeError::Mismatch(format!(
            "initial data has {} cells, grid has {}",
            initial.cells(),
            grid.cells()
        )));
    }
    let tol = T::lit(1e-9).max(T::lit(16.0) * T::epsilon());
    for i in 0..grid.cells() {
        let v = initial.at(i);
        let sum = v[0] + v[1] + v[2];
        if v.iter().any(|x| !x.is_finite() || *x < -tol) || (sum - T::one()).abs() > tol {
            return Err(PdeError::InitialData {
                u: grid.center(i).as_f64(),
                reason: format!("{v:?} is not a probability triple"),
            });
        }
    }

    let mut targets: Vec<T> = config.outputs.clone();
    targets.push(T::zero());
    targets.push(config.t_end);
    targets.sort_by(|a, b| a.partial_cmp(b).expect("validated times"));
    targets.dedup_by(|a, b| (*a - *b).abs() <= T::lit(1e-12) * (T::one() + b.abs()));

    let h = grid.h();
    let dt = config.time_step(problem.beta);
    let half = T::lit(0.5);
    let mut acc: Vec<WeightedIntegrals<T>> = config
        .decays
        .iter()
        .map(|l| WeightedIntegrals::zero(*l, grid.cells()))
        .collect();

    let mut times = Vec::with_capacity(targets.len());
    let mut fields = Vec::with_capacity(targets.len());
    let mut integrals = Vec::with_capacity(targets.len());

    let mut cur = initial;
    let mut next = cur.clone();
    let mut faces = Vec::with_capacity(grid.cells() + 1);
    let mut t = T::zero();
    let mut steps = 0usize;
    let mut bv = boundary_values(&cur, problem);

    for target in targets {
        while target - t > T::lit(1e-12) * (T::one() + target) {
            let step = dt.min(target - t);
            for a in acc.iter_mut() {
                a.add(half * step, t, &cur, &bv);
            }
            step_explicit_into(&cur, problem, h, step, &mut next, &mut faces);
            std::mem::swap(&mut cur, &mut next);
            t = if target - (t + step) <= T::lit(1e-12) * (T::one() + target) {
                target
            } else {
                t + step
            };
            cur.check(t)?;
            steps += 1;
            bv = boundary_values(&cur, problem);
            for a in acc.iter_mut() {
                a.add(half * step, t, &cur, &bv);
            }
        }
        times.push(target);
        fields.push(cur.clone());
        integrals.push(acc.clone());
    }

    Ok(PdeSolution {
        grid,
        problem: *problem,
        times,
        fields,
        integrals,
        dt,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::species::ReservoirDensities;

    pub(crate) fn model(theta: f64, delta: f64, beta_tilde: f64, beta: f64) -> ModelParams {
        ModelParams {
            n: 100,
            beta,
            beta_tilde,
            theta,
            delta,
            left: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
            right: ReservoirDensities::new(0.2, 0.3, 0.5).unwrap(),
        }
    }

    fn linear(p: &PdeProblem<f64>) -> impl Fn(f64) -> [f64; 3] + '_ {
        move |u| [0, 1, 2].map(|a| p.left[a] + (p.right[a] - p.left[a]) * u)
    }

    #[test]
    fn constant_flux_has_zero_divergence() {
        let g = Grid1D::<f64>::new(16).unwrap();
        let c = [0.5, 0.3, 0.2];
        let f = FieldTriple::constant(&g, c);
        for face in 1..16 {
            let fl = numerical_flux(&f, 1.3, g.h(), face);
            for a in 0..3 {
                let expect = 1.3 * c[a] * (c[(a + 1) % 3] - c[(a + 2) % 3]);
                assert!((fl[a] - expect).abs() < 1e-15);
            }
        }
        let f0 = numerical_flux(
            &FieldTriple::from_profile(&g, |u| [u, 0.5, 0.5 - u]),
            0.0,
            g.h(),
            3,
        );
        assert!((f0[0] - 1.0).abs() < 1e-12 && (f0[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_flux_sums_to_zero() {
        let g = Grid1D::<f64>::new(8).unwrap();
        let f = FieldTriple::from_profile(&g, |u| [0.2 + 0.5 * u, 0.3, 0.5 - 0.5 * u]);
        for face in 1..8 {
            let s: f64 = numerical_flux(&f, 2.0, g.h(), face).iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn robin_boundary_examples() {
        let g = Grid1D::<f64>::new(16).unwrap();
        let f = FieldTriple::from_profile(&g, |u| [0.3 + 0.2 * u, 0.3, 0.4 - 0.2 * u]);
        let b1 = PdeProblem::from_model(&model(2.0, 2.0, 0.5, 1.0)).unwrap();
        assert_eq!(b1.regime.label(), "b1");
        for end in [End::Left, End::Right] {
            assert_eq!(boundary_flux(&f, end, &b1, g.h()), [0.0; 3]);
        }
        let b3 = PdeProblem::from_model(&model(2.0, 1.0, 0.5, 1.0)).unwrap();
        let at_r = FieldTriple::from_profile(&g, |_| [0.5, 0.3, 0.2]);
        assert!(boundary_flux(&at_r, End::Left, &b3, g.h())[0].abs() < 1e-15);
        let brackets: f64 = robin_bracket_left([0.1, 0.6, 0.3], b1.left).iter().sum();
        let brackets_r: f64 = robin_bracket_right([0.1, 0.6, 0.3], b1.right).iter().sum();
        assert!(brackets.abs() < 1e-15 && brackets_r.abs() < 1e-15);
    }

    #[test]
    fn dirichlet_flat_state_is_fixed() {
        let mut m = model(1.5, 0.5, 1.0, 1.0);
        m.right = m.left;
        let p = PdeProblem::<f64>::from_model(&m).unwrap();
        let g = Grid1D::new(32).unwrap();
        let f = FieldTriple::constant(&g, p.left);
        let dt = SolverConfig::new(32, 0.1).time_step(p.beta);
        let next = step_explicit(&f, &p, g.h(), dt, 0.0).unwrap();
        for a in 0..3 {
            for i in 0..32 {
                assert!((next.rho[a][i] - f.rho[a][i]).abs() < 1e-14);
            }
            let bf = boundary_flux(&f, End::Left, &p, g.h());
            let diffusive = bf[a] - p.beta * p.left[a] * (p.left[(a + 1) % 3] - p.left[(a + 2) % 3]);
            assert!(diffusive.abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_dirichlet_relaxes_to_linear_profile() {
        let p = PdeProblem::<f64>::from_model(&model(1.5, 0.5, 1.0, 0.0)).unwrap();
        let g = Grid1D::new(32).unwrap();
        let init = FieldTriple::constant(&g, [1.0 / 3.0; 3]);
        let sol = solve(init, &p, &SolverConfig::new(32, 2.0)).unwrap();
        let fin = sol.final_fields();
        let lin = linear(&p);
        for i in 0..32 {
            let e = lin(g.center(i));
            for a in 0..3 {
                assert!((fin.rho[a][i] - e[a]).abs() < 1e-6, "cell {i}");
            }
        }
    }

    #[test]
    fn one_step_keeps_sum() {
        let p = PdeProblem::<f64>::from_model(&model(1.0, 1.0, 1.0, 3.0)).unwrap();
        let g = Grid1D::new(16).unwrap();
        let f = FieldTriple::from_profile(&g, |u| [0.1 + 0.6 * u, 0.5 - 0.3 * u, 0.4 - 0.3 * u]);
        let dt = SolverConfig::new(16, 1.0).time_step(p.beta);
        let next = step_explicit(&f, &p, g.h(), dt, 0.0).unwrap();
        assert!(next.max_sum_defect() < 1e-14);
    }

    #[test]
    fn zero_horizon_returns_initial() {
        let p = PdeProblem::<f64>::from_model(&model(1.5, 0.5, 1.0, 1.0)).unwrap();
        let g = Grid1D::new(16).unwrap();
        let init = FieldTriple::from_profile(&g, linear(&p));
        let sol = solve(init.clone(), &p, &SolverConfig::new(16, 0.0)).unwrap();
        assert_eq!(sol.times, vec![0.0]);
        assert_eq!(sol.fields[0], init);
        assert_eq!(sol.steps, 0);
    }

    #[test]
    fn outputs_are_all_stored() {
        let p = PdeProblem::<f64>::from_model(&model(2.0, 2.0, 1.0, 1.0)).unwrap();
        let g = Grid1D::new(16).unwrap();
        let init = FieldTriple::from_profile(&g, linear(&p));
        let cfg = SolverConfig {
            outputs: vec![0.013, 0.05],
            ..SolverConfig::new(16, 0.1)
        };
        let sol = solve(init, &p, &cfg).unwrap();
        assert_eq!(sol.times, vec![0.0, 0.013, 0.05, 0.1]);
        assert!(sol.index_of(0.013).is_ok());
        assert!(sol.index_of(0.02).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let p = PdeProblem::<f64>::from_model(&model(2.0, 2.0, 1.0, 1.0)).unwrap();
        assert!(Grid1D::<f64>::new(4).is_err());
        let g = Grid1D::new(16).unwrap();
        let bad = FieldTriple::constant(&g, [0.5, 0.5, 0.5]);
        assert!(matches!(
            solve(bad, &p, &SolverConfig::new(16, 0.1)),
            Err(PdeError::InitialData { .. })
        ));
        let f = FieldTriple::constant(&g, [0.2, 0.3, 0.5]);
        assert!(step_explicit(&f, &p, g.h(), 1.0, 0.0).is_err());
        let mut nan = f.clone();
        nan.rho[1][3] = f64::NAN;
        assert!(matches!(nan.check(0.0), Err(PdeError::NonFinite { .. })));
    }

    #[test]
    fn interpolation_hits_centers_and_boundary() {
        let p = PdeProblem::<f64>::from_model(&model(1.5, 0.5, 1.0, 1.0)).unwrap();
        let g = Grid1D::new(16).unwrap();
        let init = FieldTriple::from_profile(&g, linear(&p));
        let sol = solve(init, &p, &SolverConfig::new(16, 0.0)).unwrap();
        assert_eq!(sol.interpolate(0, 0.0), p.left);
        let lin = linear(&p);
        for u in [0.0, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0] {
            let v = sol.interpolate(0, u);
            let e = lin(u);
            for a in 0..3 {
                assert!((v[a] - e[a]).abs() < 1e-12, "u={u}");
            }
        }
    }

    #[test]
    fn single_precision_solve_tracks_double() {
        let m = model(1.0, 1.0, 1.0, 1.0);
        let p64 = PdeProblem::<f64>::from_model(&m).unwrap();
        let p32 = PdeProblem::<f32>::from_model(&m).unwrap();
        let s64 = solve(
            FieldTriple::from_profile(&Grid1D::new(16).unwrap(), linear(&p64)),
            &p64,
            &SolverConfig::new(16, 0.05),
        )
        .unwrap();
        let g32 = Grid1D::<f32>::new(16).unwrap();
        let init32 = FieldTriple::from_profile(&g32, |u| {
            [0, 1, 2].map(|a| p32.left[a] + (p32.right[a] - p32.left[a]) * u)
        });
        let s32 = solve(init32, &p32, &SolverConfig::new(16, 0.05f32)).unwrap();
        for a in 0..3 {
            for i in 0..16 {
                let d = (s64.final_fields().rho[a][i] - s32.final_fields().rho[a][i] as f64).abs();
                assert!(d < 1e-4);
            }
        }
    }
}

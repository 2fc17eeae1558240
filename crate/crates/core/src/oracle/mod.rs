//! Exact dense computations on `{A, B, E}^{N-1}` for `N <= 7`.

mod suite;

pub use suite::{run_suite, IdentityLine, SuiteConfig, SuiteReport};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::rates::{Direction, RateTable};
use crate::species::{ModelParams, ParamError, Species};

/// Largest lattice the dense oracle accepts (3^6 = 729 states).
pub const MAX_N: usize = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("N = {0} exceeds the oracle cap {MAX_N}")]
    TooLarge(usize),
    #[error("N = {0} is below 3")]
    TooSmall(usize),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("vector of length {got} does not match {expected} states")]
    Length { got: usize, expected: usize },
    #[error("invalid measure: {0}")]
    Measure(String),
    #[error("measure at the {side} boundary site {found:?} differs from the reservoir {expected:?}")]
    BoundaryMismatch {
        side: &'static str,
        found: [f64; 3],
        expected: [f64; 3],
    },
    #[error("not a density: {0}")]
    NotDensity(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("uniformization did not converge: {0}")]
    NoConvergence(String),
}

/// Configurations indexed in base 3 with site 1 the least significant digit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSpace {
    n: usize,
    size: usize,
}

impl StateSpace {
    pub fn new(n: usize) -> Result<Self, OracleError> {
        if n > MAX_N {
            return Err(OracleError::TooLarge(n));
        }
        if n < 3 {
            return Err(OracleError::TooSmall(n));
        }
        Ok(StateSpace {
            n,
            size: 3usize.pow((n - 1) as u32),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.n - 1
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn encode(&self, occ: &[Species]) -> usize {
        debug_assert_eq!(occ.len(), self.sites());
        occ.iter().rev().fold(0, |acc, s| acc * 3 + s.index())
    }

    pub fn decode(&self, mut idx: usize) -> Vec<Species> {
        (0..self.sites())
            .map(|_| {
                let s = Species::ALL[idx % 3];
                idx /= 3;
                s
            })
            .collect()
    }

    pub fn states(&self) -> impl Iterator<Item = Vec<Species>> + '_ {
        (0..self.size).map(|i| self.decode(i))
    }

    fn check_len(&self, len: usize) -> Result<(), OracleError> {
        if len != self.size {
            return Err(OracleError::Length {
                got: len,
                expected: self.size,
            });
        }
        Ok(())
    }
}

/// Which pieces of the generator to include.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parts {
    /// `None` for every bond, otherwise the listed bonds `x` (pair `x, x+1`).
    pub bonds: Option<Vec<usize>>,
    pub bulk: bool,
    pub left: bool,
    pub right: bool,
}

impl Parts {
    pub fn all() -> Self {
        Parts {
            bonds: None,
            bulk: true,
            left: true,
            right: true,
        }
    }

    pub fn bulk() -> Self {
        Parts {
            bulk: true,
            ..Self::none()
        }
    }

    pub fn left() -> Self {
        Parts {
            left: true,
            ..Self::none()
        }
    }

    pub fn right() -> Self {
        Parts {
            right: true,
            ..Self::none()
        }
    }

    pub fn bond(x: usize) -> Self {
        Parts {
            bonds: Some(vec![x]),
            bulk: true,
            ..Self::none()
        }
    }

    fn none() -> Self {
        Parts {
            bonds: None,
            bulk: false,
            left: false,
            right: false,
        }
    }
}

/// Calls `f(target, rate)` for every transition out of `occ` allowed by `parts`.
pub fn for_each_move(
    rates: &RateTable,
    occ: &[Species],
    parts: &Parts,
    mut f: impl FnMut(Vec<Species>, f64),
) {
    let sites = occ.len();
    if parts.bulk {
        let bonds: Vec<usize> = match &parts.bonds {
            Some(b) => b.clone(),
            None => (1..sites).collect(),
        };
        for x in bonds {
            let (l, r) = (occ[x - 1], occ[x]);
            let c = rates.bulk(l, r);
            if c > 0.0 {
                let mut next = occ.to_vec();
                next.swap(x - 1, x);
                f(next, c);
            }
        }
    }
    let mut flip = |site: usize, up: f64, down: f64| {
        let s = occ[site - 1];
        for (dir, c) in [(Direction::Up, up), (Direction::Down, down)] {
            if c > 0.0 {
                let mut next = occ.to_vec();
                next[site - 1] = s.cyclic_next(dir.offset());
                f(next, c);
            }
        }
    };
    if parts.left {
        let (up, down) = rates.flip(crate::rates::Side::Left, occ[0]);
        flip(1, up, down);
    }
    if parts.right {
        let (up, down) = rates.flip(crate::rates::Side::Right, occ[sites - 1]);
        flip(sites, up, down);
    }
}

/// Dense microscopic rate matrix (no `N^2` factor).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    pub space: StateSpace,
    pub parts: Parts,
    pub q: DMatrix<f64>,
}

impl GeneratorMatrix {
    /// `(Q v)(eta) = sum_eta' q(eta, eta') v(eta')`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.space.check_len(v.len())?;
        Ok((&self.q * DVector::from_column_slice(v)).as_slice().to_vec())
    }

    /// Largest `|row sum|`.
    pub fn max_row_sum(&self) -> f64 {
        self.q.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }

    /// Most negative off-diagonal entry, or `0`.
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.q.nrows();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.min(self.q[(i, j)]);
                }
            }
        }
        m
    }
}

/// `Q[i][j]` = rate of the move taking configuration `i` to `j`; diagonal = minus the row sum.
pub fn build_generator(rates: &RateTable, parts: Parts) -> Result<GeneratorMatrix, OracleError> {
    let space = StateSpace::new(rates.n)?;
    let mut q = DMatrix::zeros(space.size(), space.size());
    for (i, occ) in space.states().enumerate() {
        let mut out = 0.0;
        for_each_move(rates, &occ, &parts, |next, c| {
            q[(i, space.encode(&next))] += c;
            out += c;
        });
        q[(i, i)] -= out;
    }
    Ok(GeneratorMatrix { space, parts, q })
}

/// Generator of `params` with the given pieces.
pub fn build_generator_for(params: &ModelParams, parts: Parts) -> Result<GeneratorMatrix, OracleError> {
    let params = params.validate()?;
    build_generator(&RateTable::new(&params), parts)
}

/// Law of `eta_t` for the `N^2`-accelerated process started from `p0`,
/// by uniformization in chunks with Poisson tail below `1e-15` per chunk.
pub fn exact_distribution(gen: &GeneratorMatrix, p0: &[f64], t: f64) -> Result<Vec<f64>, OracleError> {
    gen.space.check_len(p0.len())?;
    if !(t >= 0.0) {
        return Err(OracleError::NegativeTime(t));
    }
    let n2 = (gen.space.n() * gen.space.n()) as f64;
    let lambda = (0..gen.q.nrows()).map(|i| -gen.q[(i, i)]).fold(0.0, f64::max) * n2;
    let mut p = DVector::from_column_slice(p0).transpose();
    if t == 0.0 || lambda == 0.0 {
        return Ok(p.as_slice().to_vec());
    }
    let size = gen.q.nrows();
    let kernel = DMatrix::identity(size, size) + &gen.q * (n2 / lambda);
    let chunks = (lambda * t / 30.0).ceil().max(1.0);
    let a = lambda * t / chunks;
    for _ in 0..chunks as usize {
        let mut term = p.clone();
        let mut weight = (-a).exp();
        let mut acc = &term * weight;
        let mut covered = weight;
        let mut k = 0usize;
        while 1.0 - covered > 1e-15 {
            k += 1;
            if k > 10_000 {
                return Err(OracleError::NoConvergence(format!(
                    "Poisson mass {covered} after {k} terms"
                )));
            }
            term = &term * &kernel;
            weight *= a / k as f64;
            acc += &term * weight;
            covered += weight;
        }
        p = acc;
    }
    Ok(p.as_slice().to_vec())
}

/// `E[obs(eta_t)]` for the `N^2`-accelerated process.
pub fn exact_expectation(gen: &GeneratorMatrix, p0: &[f64], obs: &[f64], t: f64) -> Result<f64, OracleError> {
    gen.space.check_len(obs.len())?;
    let p = exact_distribution(gen, p0, t)?;
    Ok(p.iter().zip(obs).map(|(a, b)| a * b).sum())
}

/// Product measure with one probability triple per site.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductMeasure {
    marginals: Vec<[f64; 3]>,
}

impl ProductMeasure {
    pub fn new(marginals: Vec<[f64; 3]>) -> Result<Self, OracleError> {
        for (i, m) in marginals.iter().enumerate() {
            if m.iter().any(|p| !(*p > 0.0)) {
                return Err(OracleError::Measure(format!(
                    "site {} has a non-positive entry {m:?}",
                    i + 1
                )));
            }
            if (m.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(OracleError::Measure(format!(
                    "site {} triple {m:?} does not sum to 1",
                    i + 1
                )));
            }
        }
        Ok(ProductMeasure { marginals })
    }

    pub fn uniform(n: usize, m: [f64; 3]) -> Result<Self, OracleError> {
        Self::new(vec![m; n - 1])
    }

    /// Marginal `profile(x/N)` at site `x`.
    pub fn from_profile(n: usize, profile: impl Fn(f64) -> [f64; 3]) -> Result<Self, OracleError> {
        Self::new((1..n).map(|x| profile(x as f64 / n as f64)).collect())
    }

    pub fn marginals(&self) -> &[[f64; 3]] {
        &self.marginals
    }

    pub fn prob(&self, occ: &[Species]) -> f64 {
        occ.iter()
            .zip(&self.marginals)
            .map(|(s, m)| m[s.index()])
            .product()
    }

    pub fn weights(&self, space: &StateSpace) -> Result<Vec<f64>, OracleError> {
        space.check_len(3usize.pow(self.marginals.len() as u32))?;
        Ok(space.states().map(|o| self.prob(&o)).collect())
    }

    pub fn min_entry(&self) -> f64 {
        self.marginals
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn boundary_check(side: &'static str, found: [f64; 3], expected: [f64; 3]) -> Result<(), OracleError> {
    if found.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-14) {
        return Err(OracleError::BoundaryMismatch {
            side,
            found,
            expected,
        });
    }
    Ok(())
}

/// Adjoint of the left boundary generator in `L^2(nu)`, built from the
/// closed form: flip coefficients `N^-delta -/+ (beta_tilde/2) N^-theta` swapped
/// between up and down, plus the multiplicative term
/// `(beta_tilde/N^theta)[xi^A (r_E - r_B) + xi^B (r_A - r_E) + xi^E (r_B - r_A)]`.
/// `nu` must equal the left reservoir triple at site 1.
pub fn adjoint_left(params: &ModelParams, nu: &ProductMeasure) -> Result<GeneratorMatrix, OracleError> {
    adjoint_boundary(params, nu, crate::rates::Side::Left)
}

/// Right-boundary counterpart of [`adjoint_left`]: coefficients
/// `N^-delta +/- (beta_tilde/2) N^-theta` for up/down and the multiplicative
/// term with `r~` and the opposite sign.
pub fn adjoint_right(params: &ModelParams, nu: &ProductMeasure) -> Result<GeneratorMatrix, OracleError> {
    adjoint_boundary(params, nu, crate::rates::Side::Right)
}

fn adjoint_boundary(
    params: &ModelParams,
    nu: &ProductMeasure,
    side: crate::rates::Side,
) -> Result<GeneratorMatrix, OracleError> {
    use crate::rates::Side;
    let params = params.validate()?;
    let space = StateSpace::new(params.n)?;
    if nu.marginals().len() != space.sites() {
        return Err(OracleError::Measure(format!(
            "{} marginals for {} sites",
            nu.marginals().len(),
            space.sites()
        )));
    }
    let n = params.n as f64;
    let sym = n.powf(-params.delta);
    let asym = params.beta_tilde * n.powf(-params.theta);
    let (site, r, sign, parts) = match side {
        Side::Left => {
            boundary_check("left", nu.marginals()[0], params.left.as_array())?;
            (1, params.left, 1.0, Parts::left())
        }
        Side::Right => {
            let last = space.sites();
            boundary_check("right", nu.marginals()[last - 1], params.right.as_array())?;
            (last, params.right, -1.0, Parts::right())
        }
    };
    // Forward up rate is sym + sign*asym/2; the adjoint takes the down coefficient.
    let up = sym - sign * 0.5 * asym;
    let down = sym + sign * 0.5 * asym;
    let mut q = DMatrix::zeros(space.size(), space.size());
    for (i, occ) in space.states().enumerate() {
        let s = occ[site - 1];
        let mut out = 0.0;
        for (dir, c) in [(1, up), (-1, down)] {
            let target = s.cyclic_next(dir);
            let rate = c * r.get(target);
            let mut next = occ.clone();
            next[site - 1] = target;
            q[(i, space.encode(&next))] += rate;
            out += rate;
        }
        let diag = sign * asym * (r.get(s.cyclic_next(-1)) - r.get(s.cyclic_next(1)));
        q[(i, i)] += diag - out;
    }
    Ok(GeneratorMatrix { space, parts, q })
}

/// `<f, g>_nu`.
pub fn inner(nu_weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    nu_weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
}

/// `H(mu | nu) = sum mu log(mu / nu)` with `0 log 0 = 0`.
pub fn relative_entropy(mu: &[f64], nu: &ProductMeasure) -> Result<f64, OracleError> {
    let space = StateSpace::new(nu.marginals().len() + 1)?;
    space.check_len(mu.len())?;
    Ok(space
        .states()
        .zip(mu)
        .filter(|(_, m)| **m > 0.0)
        .map(|(o, m)| m * (m / nu.prob(&o)).ln())
        .sum())
}

/// Two sides of `<L sqrt f, sqrt f>_nu = -(1/2) D(sqrt f) + (1/2) sum nu c (f' - f)`
/// for one piece of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct FormCheck {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// The quadratic form `D(sqrt f, nu)`.
    pub form: f64,
}

impl FormCheck {
    pub fn deviation(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletFormReport {
    pub checks: Vec<FormCheck>,
}

impl DirichletFormReport {
    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(FormCheck::deviation).fold(0.0, f64::max)
    }

    pub fn min_form(&self) -> f64 {
        self.checks.iter().map(|c| c.form).fold(f64::INFINITY, f64::min)
    }
}

/// Checks the identity for `L^L`, `L^R` and each bulk bond separately.
/// `f` must be a density with respect to `nu` (nonnegative, `nu`-mean 1).
pub fn dirichlet_form_identity(
    rates: &RateTable,
    nu: &ProductMeasure,
    f: &[f64],
) -> Result<DirichletFormReport, OracleError> {
    let space = StateSpace::new(rates.n)?;
    if space.n() > 6 {
        return Err(OracleError::TooLarge(space.n()));
    }
    space.check_len(f.len())?;
    let w = nu.weights(&space)?;
    if let Some(v) = f.iter().find(|v| !(**v >= 0.0)) {
        return Err(OracleError::NotDensity(format!("negative value {v}")));
    }
    let mean = inner(&w, f, &vec![1.0; f.len()]);
    if (mean - 1.0).abs() > 1e-12 {
        return Err(OracleError::NotDensity(format!("nu-mean {mean}")));
    }
    let root: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
    let mut pieces: Vec<(String, Parts)> =
        vec![("left".into(), Parts::left()), ("right".into(), Parts::right())];
    for x in 1..space.sites() {
        pieces.push((format!("bond {x}"), Parts::bond(x)));
    }
    let mut checks = Vec::new();
    for (label, parts) in pieces {
        let lhs = inner(&w, &build_generator(rates, parts.clone())?.apply(&root)?, &root);
        let mut form = 0.0;
        let mut drift = 0.0;
        for (i, occ) in space.states().enumerate() {
            for_each_move(rates, &occ, &parts, |next, c| {
                let j = space.encode(&next);
                form += w[i] * c * (root[j] - root[i]).powi(2);
                drift += w[i] * c * (f[j] - f[i]);
            });
        }
        checks.push(FormCheck {
            label,
            lhs,
            rhs: -0.5 * form + 0.5 * drift,
            form,
        });
    }
    Ok(DirichletFormReport { checks })
}

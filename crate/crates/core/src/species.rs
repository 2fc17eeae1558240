//! Species algebra, model parameters and boundary-regime classification.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Occupation state of a lattice site. `Empty` plays the role of the third species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Species {
    A = 0,
    B = 1,
    Empty = 2,
}

impl Species {
    pub const ALL: [Species; 3] = [Species::A, Species::B, Species::Empty];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    /// Inverse of [`Species::code`]; `None` for codes above 2.
    #[inline]
    pub const fn from_code(code: u8) -> Option<Species> {
        match code {
            0 => Some(Species::A),
            1 => Some(Species::B),
            2 => Some(Species::Empty),
            _ => None,
        }
    }

    /// Byte code used by the trajectory stream and the oracle state codec.
    #[inline]
    pub const fn code(self) -> u8 {
        self as u8
    }

    /// `self + k` in the cyclic order A → B → Empty → A. Any offset is accepted
    /// and reduced mod 3, so `-1` is the predecessor.
    #[inline]
    pub const fn cyclic_next(self, k: i32) -> Species {
        let idx = (self as i32 + k).rem_euclid(3);
        match idx {
            0 => Species::A,
            1 => Species::B,
            _ => Species::Empty,
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Species::A => "A",
            Species::B => "B",
            Species::Empty => "E",
        };
        f.write_str(s)
    }
}

/// Free function form of [`Species::cyclic_next`].
#[inline]
pub const fn cyclic_next(s: Species, k: i32) -> Species {
    s.cyclic_next(k)
}

/// Tolerance on `rA + rB + rE = 1`.
pub const DENSITY_SUM_TOL: f64 = 1e-12;

/// Reservoir concentrations of A, B and holes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservoirDensities {
    pub a: f64,
    pub b: f64,
    pub empty: f64,
}

impl ReservoirDensities {
    pub fn new(a: f64, b: f64, empty: f64) -> Result<Self, ParamError> {
        let r = ReservoirDensities { a, b, empty };
        r.validate()?;
        Ok(r)
    }

    /// Uniform triple (1/3, 1/3, 1/3).
    pub fn uniform() -> Self {
        ReservoirDensities {
            a: 1.0 / 3.0,
            b: 1.0 / 3.0,
            empty: 1.0 / 3.0,
        }
    }

    pub fn from_array(v: [f64; 3]) -> Result<Self, ParamError> {
        Self::new(v[0], v[1], v[2])
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.empty]
    }

    #[inline]
    pub fn get(&self, s: Species) -> f64 {
        match s {
            Species::A => self.a,
            Species::B => self.b,
            Species::Empty => self.empty,
        }
    }

    pub fn min_entry(&self) -> f64 {
        self.a.min(self.b).min(self.empty)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let v = self.as_array();
        if v.iter().any(|x| !x.is_finite() || *x <= 0.0 || *x >= 1.0) {
            return Err(ParamError::DensityRange { values: v });
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > DENSITY_SUM_TOL {
            return Err(ParamError::DensitySum { values: v, sum });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error(
        "exponent order violated: need theta >= delta and theta >= 1 (theta = {theta}, delta = {delta})"
    )]
    ExponentOrder { theta: f64, delta: f64 },
    #[error(
        "boundary asymmetry too large: theta == delta requires beta_tilde < 2 (beta_tilde = {beta_tilde})"
    )]
    BetaTildeBound { beta_tilde: f64 },
    #[error("negative jump rate at N = {n}: need beta/(2N) < 1 and beta_tilde/(2 N^(theta-delta)) <= 1 ({detail})")]
    NegativeRate { n: usize, detail: String },
    #[error("reservoir densities {values:?} sum to {sum}, not 1")]
    DensitySum { values: [f64; 3], sum: f64 },
    #[error("reservoir densities {values:?} must lie strictly inside (0, 1)")]
    DensityRange { values: [f64; 3] },
    #[error("lattice size N = {n} is below the minimum of 3")]
    LatticeTooSmall { n: usize },
    #[error("parameter {name} = {value} must be finite and nonnegative")]
    InvalidValue { name: &'static str, value: f64 },
}

/// All scalars of the microscopic model. Sites are `1..=N-1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub beta: f64,
    pub beta_tilde: f64,
    pub theta: f64,
    pub delta: f64,
    pub left: ReservoirDensities,
    pub right: ReservoirDensities,
}

impl ModelParams {
    /// Returns `self` unchanged when every model constraint holds.
    pub fn validate(self) -> Result<Self, ParamError> {
        for (name, value) in [("beta", self.beta), ("beta_tilde", self.beta_tilde)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ParamError::InvalidValue { name, value });
            }
        }
        for (name, value) in [("theta", self.theta), ("delta", self.delta)] {
            if !value.is_finite() {
                return Err(ParamError::InvalidValue { name, value });
            }
        }
        if self.n < 3 {
            return Err(ParamError::LatticeTooSmall { n: self.n });
        }
        check_exponents(self.theta, self.delta, self.beta_tilde)?;
        let n = self.n as f64;
        if self.beta / (2.0 * n) >= 1.0 {
            return Err(ParamError::NegativeRate {
                n: self.n,
                detail: format!("beta/(2N) = {}", self.beta / (2.0 * n)),
            });
        }
        let boundary = self.beta_tilde / (2.0 * n.powf(self.theta - self.delta));
        if boundary > 1.0 {
            return Err(ParamError::NegativeRate {
                n: self.n,
                detail: format!("beta_tilde/(2 N^(theta-delta)) = {boundary}"),
            });
        }
        self.left.validate()?;
        self.right.validate()?;
        Ok(self)
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.n - 1
    }

    pub fn regime(&self) -> Result<RegimeSpec, ParamError> {
        classify_regime(self.theta, self.delta, self.beta_tilde)
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

fn check_exponents(theta: f64, delta: f64, beta_tilde: f64) -> Result<(), ParamError> {
    if theta < delta || theta < 1.0 {
        return Err(ParamError::ExponentOrder { theta, delta });
    }
    if theta == delta && beta_tilde >= 2.0 {
        return Err(ParamError::BetaTildeBound { beta_tilde });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeKind {
    Dirichlet,
    Robin,
}

/// Macroscopic boundary condition selected by `(theta, delta, beta_tilde)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub kind: RegimeKind,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Set for `theta = delta = 1` with `beta_tilde >= 4/3`: the process is well
    /// defined but uniqueness of the limiting weak solution is not established.
    pub uniqueness_unproved: bool,
}

impl RegimeSpec {
    pub const fn dirichlet() -> Self {
        RegimeSpec {
            kind: RegimeKind::Dirichlet,
            kappa1: 0.0,
            kappa2: 0.0,
            uniqueness_unproved: false,
        }
    }

    pub const fn robin(kappa1: f64, kappa2: f64) -> Self {
        RegimeSpec {
            kind: RegimeKind::Robin,
            kappa1,
            kappa2,
            uniqueness_unproved: false,
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        self.kind == RegimeKind::Dirichlet
    }

    /// Short label: `dirichlet`, `b1`, `b2`, `b3`, or `robin` for other coefficients.
    pub fn label(&self) -> &'static str {
        match (self.kind, self.kappa1 == 0.0, self.kappa2) {
            (RegimeKind::Dirichlet, _, _) => "dirichlet",
            (RegimeKind::Robin, true, 0.0) => "b1",
            (RegimeKind::Robin, true, 1.0) => "b3",
            (RegimeKind::Robin, false, 1.0) => "b2",
            _ => "robin",
        }
    }
}

/// Boundary regime of the hydrodynamic limit.
///
/// * `delta < 1 <= theta`: Dirichlet
/// * `theta >= delta > 1`: Robin(0, 0)
/// * `theta = delta = 1`: Robin(beta_tilde/2, 1), flagged when `beta_tilde >= 4/3`
/// * `theta > 1 = delta`: Robin(0, 1)
pub fn classify_regime(theta: f64, delta: f64, beta_tilde: f64) -> Result<RegimeSpec, ParamError> {
    check_exponents(theta, delta, beta_tilde)?;
    let spec = if delta < 1.0 {
        RegimeSpec::dirichlet()
    } else if delta > 1.0 {
        RegimeSpec::robin(0.0, 0.0)
    } else if theta == 1.0 {
        RegimeSpec {
            uniqueness_unproved: beta_tilde >= 4.0 / 3.0,
            ..RegimeSpec::robin(beta_tilde / 2.0, 1.0)
        }
    } else {
        RegimeSpec::robin(0.0, 1.0)
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base_params() -> ModelParams {
        ModelParams {
            n: 64,
            beta: 1.0,
            beta_tilde: 1.0,
            theta: 1.0,
            delta: 1.0,
            left: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
            right: ReservoirDensities::new(0.2, 0.3, 0.5).unwrap(),
        }
    }

    #[test]
    fn cyclic_examples() {
        assert_eq!(cyclic_next(Species::A, 1), Species::B);
        assert_eq!(cyclic_next(Species::Empty, 1), Species::A);
        assert_eq!(cyclic_next(Species::B, 0), Species::B);
        assert_eq!(cyclic_next(Species::A, -1), Species::Empty);
        assert_eq!(cyclic_next(Species::B, 5), Species::A);
    }

    #[test]
    fn cyclic_order_is_a_three_cycle() {
        for s in Species::ALL {
            assert_eq!(s.cyclic_next(1).cyclic_next(1).cyclic_next(1), s);
            assert_ne!(s.cyclic_next(1), s);
            assert_ne!(s.cyclic_next(2), s);
        }
    }

    #[test]
    fn validate_accepts_reference_point() {
        assert_eq!(base_params().validate(), Ok(base_params()));
    }

    #[test]
    fn validate_rejects_each_constraint() {
        let p = ModelParams {
            theta: 0.5,
            delta: 0.5,
            ..base_params()
        };
        assert!(matches!(p.validate(), Err(ParamError::ExponentOrder { .. })));

        let p = ModelParams {
            beta_tilde: 2.5,
            ..base_params()
        };
        assert!(matches!(p.validate(), Err(ParamError::BetaTildeBound { .. })));

        let p = ModelParams {
            n: 3,
            beta: 7.0,
            ..base_params()
        };
        assert!(matches!(p.validate(), Err(ParamError::NegativeRate { .. })));

        // theta > delta: beta_tilde may exceed 2 but not 2 N^(theta-delta).
        let p = ModelParams {
            n: 4,
            theta: 1.5,
            delta: 1.0,
            beta_tilde: 4.5,
            ..base_params()
        };
        assert!(matches!(p.validate(), Err(ParamError::NegativeRate { .. })));

        let p = ModelParams {
            left: ReservoirDensities {
                a: 0.5,
                b: 0.3,
                empty: 0.3,
            },
            ..base_params()
        };
        assert!(matches!(p.validate(), Err(ParamError::DensitySum { .. })));

        let p = ModelParams {
            n: 2,
            ..base_params()
        };
        assert!(matches!(p.validate(), Err(ParamError::LatticeTooSmall { .. })));
    }

    #[test]
    fn reservoir_requires_strict_positivity() {
        assert!(ReservoirDensities::new(1.0, 0.0, 0.0).is_err());
        assert!(ReservoirDensities::new(0.5, 0.5, 0.0).is_err());
        assert!(ReservoirDensities::new(0.2, 0.3, 0.5).is_ok());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(classify_regime(1.5, 0.5, 1.0).unwrap(), RegimeSpec::dirichlet());
        assert_eq!(
            classify_regime(1.0, 1.0, 1.0).unwrap(),
            RegimeSpec::robin(0.5, 1.0)
        );
        assert_eq!(
            classify_regime(2.0, 1.5, 1.0).unwrap(),
            RegimeSpec::robin(0.0, 0.0)
        );
        assert_eq!(
            classify_regime(1.2, 1.0, 1.0).unwrap(),
            RegimeSpec::robin(0.0, 1.0)
        );
        assert_eq!(classify_regime(1.2, 1.0, 1.0).unwrap().label(), "b3");
    }

    #[test]
    fn large_boundary_asymmetry_is_flagged_not_rejected() {
        let spec = classify_regime(1.0, 1.0, 1.5).unwrap();
        assert_eq!(spec.kind, RegimeKind::Robin);
        assert_eq!(spec.kappa1, 0.75);
        assert!(spec.uniqueness_unproved);
        assert!(!classify_regime(1.0, 1.0, 1.0).unwrap().uniqueness_unproved);
    }

    proptest! {
        #[test]
        fn regime_partition_is_total(theta in 1.0f64..4.0, frac in 0.0f64..1.0, bt in 0.0f64..1.99) {
            // Snap a fraction of draws onto the lines delta = 1 and theta = delta.
            let delta = match (frac * 10.0) as u32 {
                0 => 1.0,
                1 => theta,
                _ => frac * theta,
            };
            let theta = if delta == 1.0 && frac < 0.05 { 1.0 } else { theta };
            let spec = classify_regime(theta, delta, bt).unwrap();
            let expected = if delta < 1.0 { "dirichlet" }
                else if delta > 1.0 { "b1" }
                else if theta == 1.0 { "b2" }
                else { "b3" };
            prop_assert_eq!(spec.label(), expected);
            if spec.is_dirichlet() {
                prop_assert_eq!((spec.kappa1, spec.kappa2), (0.0, 0.0));
            }
        }

        #[test]
        fn normalized_densities_sum_to_one(a in 0.01f64..1.0, b in 0.01f64..1.0, c in 0.01f64..1.0) {
            let s = a + b + c;
            if let Ok(r) = ReservoirDensities::new(a / s, b / s, 1.0 - a / s - b / s) {
                prop_assert!((r.a + r.b + r.empty - 1.0).abs() <= DENSITY_SUM_TOL);
            }
        }
    }
}

//! Boundary-driven weakly asymmetric ABC exclusion process and its
//! hydrodynamic limit.
//!
//! * [`species`]: species algebra, model parameters, boundary-regime map
//! * [`simulator`]: exact continuous-time Monte Carlo of the particle system
//! * [`empirical`]: empirical-measure observables and Dynkin martingales
//! * [`pde`]: finite-volume solver for the limiting coupled parabolic system
//! * [`oracle`]: exact dense-matrix computations for small lattices
//! * [`compare`]: particle-vs-PDE error measures

pub mod compare;
pub mod empirical;
pub mod oracle;
pub mod pde;
pub mod profile;
pub mod rates;
pub mod scalar;
pub mod simulator;
pub mod species;
pub mod testfn;

pub use profile::ProfilePreset;
pub use rates::{Direction, RateTable, Side};
pub use scalar::Scalar;
pub use species::{
    classify_regime, cyclic_next, ModelParams, ParamError, RegimeKind, RegimeSpec, ReservoirDensities,
    Species,
};

/// Double-precision instantiations of the generic numerics.
pub type Grid = pde::Grid1D<f64>;
pub type Fields = pde::FieldTriple<f64>;
pub type Solution = pde::PdeSolution<f64>;
pub type SolverConfig = pde::SolverConfig<f64>;
pub type TestFn = testfn::TestFunction<f64>;
/// Single-precision solution, for memory-bound sweeps.
pub type SolutionF32 = pde::PdeSolution<f32>;

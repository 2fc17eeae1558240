//! Weak-formulation residuals of a computed solution.
//!
//! For `phi(s, u) = exp(-lambda s) psi(u)` the time integrals reduce to the
//! weighted integrals the solver accumulated (trapezoid in time), and the
//! space integrals use the midpoint rule on the cell centers.

use super::{robin_bracket_left, robin_bracket_right, PdeError, PdeSolution, WeightedIntegrals};
use crate::scalar::Scalar;
use crate::species::{RegimeSpec, Species};
use crate::testfn::TestFunction;

fn integrals_for<T: Scalar>(
    sol: &PdeSolution<T>,
    k: usize,
    decay: T,
) -> Result<&WeightedIntegrals<T>, PdeError> {
    sol.integrals[k]
        .iter()
        .find(|w| w.decay == decay)
        .ok_or(PdeError::DecayNotTracked(decay.as_f64()))
}

/// Bulk part: `exp(-lambda t)<rho_t, psi> - <rho_0, psi> - int exp(-lambda s)
/// [<rho, psi''> - beta <drift, psi'> - lambda <rho, psi>] ds`.
fn bulk_part<'a, T: Scalar>(
    sol: &'a PdeSolution<T>,
    phi: &TestFunction<T>,
    a: usize,
    k: usize,
) -> Result<(T, &'a WeightedIntegrals<T>), PdeError> {
    let w = integrals_for(sol, k, phi.decay)?;
    let g = &sol.grid;
    let h = g.h();
    let (rho_t, rho_0) = (&sol.fields[k].rho[a], &sol.fields[0].rho[a]);
    let decay_t = phi.time_factor(sol.times[k]);
    let beta = sol.problem.beta;
    let mut pair_t = T::zero();
    let mut pair_0 = T::zero();
    let mut integral = T::zero();
    for i in 0..g.cells() {
        let (psi, dpsi, ddpsi) = phi.spatial(g.center(i));
        pair_t += rho_t[i] * psi;
        pair_0 += rho_0[i] * psi;
        integral += w.rho[a][i] * (ddpsi - phi.decay * psi) - beta * w.drift[a][i] * dpsi;
    }
    Ok((h * (decay_t * pair_t - pair_0 - integral), w))
}

/// Dirichlet weak residual of species `alpha` at stored time `t`. `phi` must
/// vanish with its derivatives near both ends.
pub fn weak_residual_dirichlet<T: Scalar>(
    sol: &PdeSolution<T>,
    phi: &TestFunction<T>,
    alpha: Species,
    t: T,
) -> Result<T, PdeError> {
    if !phi.is_compactly_supported() {
        return Err(PdeError::NotCompactlySupported);
    }
    let k = sol.index_of(t)?;
    Ok(bulk_part(sol, phi, alpha.index(), k)?.0)
}

/// Robin weak residual with the boundary line
/// `psi'(0) rho(0) - psi'(1) rho(1)`, the two `kappa1` brackets and the
/// `kappa2` reservoir terms of `regime`.
pub fn weak_residual_robin<T: Scalar>(
    sol: &PdeSolution<T>,
    phi: &TestFunction<T>,
    alpha: Species,
    t: T,
    regime: &RegimeSpec,
) -> Result<T, PdeError> {
    let a = alpha.index();
    let k = sol.index_of(t)?;
    let (bulk, w) = bulk_part(sol, phi, a, k)?;
    let (p0, d0, _) = phi.spatial(T::zero());
    let (p1, d1, _) = phi.spatial(T::one());
    let (k1, k2) = (T::lit(regime.kappa1), T::lit(regime.kappa2));
    let (r, rt) = (sol.problem.left, sol.problem.right);
    // Brackets are affine in the boundary values; the constant part carries
    // the accumulated weight.
    let b0 = robin_bracket_left(w.left, r)[a] + r[a] * (w.weight - T::one());
    let b1 = robin_bracket_right(w.right, rt)[a] - rt[a] * (w.weight - T::one());
    let boundary = d0 * w.left[a] - d1 * w.right[a]
        + k1 * (p1 * b1 + p0 * b0)
        + k2 * (p1 * (rt[a] * w.weight - w.right[a]) + p0 * (r[a] * w.weight - w.left[a]));
    Ok(bulk - boundary)
}

/// Residual in the solution's own regime: Dirichlet for compactly supported
/// `phi` in the Dirichlet regime, Robin otherwise.
pub fn weak_residual<T: Scalar>(
    sol: &PdeSolution<T>,
    phi: &TestFunction<T>,
    alpha: Species,
    t: T,
) -> Result<T, PdeError> {
    let regime = sol.problem.regime;
    if regime.is_dirichlet() {
        weak_residual_dirichlet(sol, phi, alpha, t)
    } else {
        weak_residual_robin(sol, phi, alpha, t, &regime)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::tests::model;
    use crate::pde::{solve, FieldTriple, Grid1D, PdeProblem, SolverConfig};
    use crate::testfn::Shape;

    #[test]
    fn flat_dirichlet_state_has_zero_residual() {
        let mut m = model(1.5, 0.5, 1.0, 1.0);
        m.right = m.left;
        let p = PdeProblem::<f64>::from_model(&m).unwrap();
        let g = Grid1D::new(128).unwrap();
        let sol = solve(
            FieldTriple::constant(&g, p.left),
            &p,
            &SolverConfig::new(128, 0.05),
        )
        .unwrap();
        for phi in TestFunction::dirichlet_family() {
            for s in Species::ALL {
                assert_eq!(weak_residual_dirichlet(&sol, &phi, s, 0.0).unwrap(), 0.0);
                // Midpoint quadrature of psi'' and psi' only.
                let r = weak_residual_dirichlet(&sol, &phi, s, 0.05).unwrap();
                assert!(r.abs() < 1e-8, "{r}");
            }
        }
        let cos = TestFunction::<f64>::cosine(1, 0.0);
        assert!(matches!(
            weak_residual_dirichlet(&sol, &cos, Species::A, 0.05),
            Err(PdeError::NotCompactlySupported)
        ));
    }

    #[test]
    fn flat_b3_state_has_zero_residual() {
        // Constants are stationary in the Robin regimes only without drift.
        let mut m = model(2.0, 1.0, 1.0, 0.0);
        m.right = m.left;
        let p = PdeProblem::<f64>::from_model(&m).unwrap();
        assert_eq!(p.regime.label(), "b3");
        let g = Grid1D::new(128).unwrap();
        let sol = solve(
            FieldTriple::constant(&g, p.left),
            &p,
            &SolverConfig::new(128, 0.05),
        )
        .unwrap();
        for phi in TestFunction::robin_family() {
            for s in Species::ALL {
                let r = weak_residual_robin(&sol, &phi, s, 0.05, &p.regime).unwrap();
                assert!(r.abs() < 1e-8, "{phi:?} {r}");
            }
        }
    }

    #[test]
    fn mass_residual_in_b1_vanishes() {
        let p = PdeProblem::<f64>::from_model(&model(2.0, 2.0, 1.0, 1.0)).unwrap();
        let g = Grid1D::new(32).unwrap();
        let init = FieldTriple::from_profile(&g, |u| [0.2 + 0.5 * u, 0.3, 0.5 - 0.5 * u]);
        let sol = solve(init, &p, &SolverConfig::new(32, 0.05)).unwrap();
        let one = TestFunction::stationary(Shape::Constant(1.0));
        for s in Species::ALL {
            let r = weak_residual_robin(&sol, &one, s, 0.05, &p.regime).unwrap();
            assert!(r.abs() < 1e-12);
        }
        let fast = TestFunction::decaying(Shape::Constant(1.0), 7.0);
        assert!(matches!(
            weak_residual_robin(&sol, &fast, Species::A, 0.05, &p.regime),
            Err(PdeError::DecayNotTracked(_))
        ));
    }

    #[test]
    fn residual_shrinks_under_refinement() {
        for (theta, delta) in [(1.5, 0.5), (1.0, 1.0)] {
            let p = PdeProblem::<f64>::from_model(&model(theta, delta, 1.0, 1.0)).unwrap();
            let fam = if p.regime.is_dirichlet() {
                TestFunction::dirichlet_family()
            } else {
                TestFunction::robin_family()
            };
            let res = |m: usize| {
                let g = Grid1D::new(m).unwrap();
                let init = FieldTriple::from_profile(&g, |u| {
                    [0, 1, 2].map(|a| p.left[a] + (p.right[a] - p.left[a]) * u)
                });
                let sol = solve(init, &p, &SolverConfig::new(m, 0.02)).unwrap();
                fam.iter()
                    .flat_map(|phi| Species::ALL.map(|s| weak_residual(&sol, phi, s, 0.02).unwrap().abs()))
                    .fold(0.0, f64::max)
            };
            assert!(res(64) < res(16), "theta={theta}");
        }
    }
}

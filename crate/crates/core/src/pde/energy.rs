//! Energy functionals of the difference of two solutions.

use super::{PdeError, PdeSolution};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct EnergySeries<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
}

fn check_pair<T: Scalar>(a: &PdeSolution<T>, b: &PdeSolution<T>) -> Result<(), PdeError> {
    if a.grid != b.grid {
        return Err(PdeError::Mismatch(format!(
            "grids with {} and {} cells",
            a.grid.cells(),
            b.grid.cells()
        )));
    }
    if a.times != b.times {
        return Err(PdeError::Mismatch("different snapshot times".into()));
    }
    if a.problem.left != b.problem.left || a.problem.right != b.problem.right {
        return Err(PdeError::Mismatch("different boundary data".into()));
    }
    if a.problem.regime != b.problem.regime {
        return Err(PdeError::Mismatch(format!(
            "regimes {} and {}",
            a.problem.regime.label(),
            b.problem.regime.label()
        )));
    }
    Ok(())
}

/// `V(t) = sum_a sum_{k<=K} <rhobar^a_t, psi_k>^2 / (2 a_k)` with
/// `psi_k = sqrt(2) sin(k pi u)`, `a_k = (k pi)^2 + 1`.
pub fn energy_v<T: Scalar>(
    a: &PdeSolution<T>,
    b: &PdeSolution<T>,
    modes: usize,
) -> Result<EnergySeries<T>, PdeError> {
    check_pair(a, b)?;
    let g = &a.grid;
    let h = g.h();
    let sqrt2 = T::lit(2.0).sqrt();
    let centers = g.centers();
    // basis[k][i] = psi_{k+1}(u_i)
    let basis: Vec<Vec<T>> = (1..=modes)
        .map(|k| {
            let w = T::pi() * T::lit(k as f64);
            centers.iter().map(|u| sqrt2 * (w * *u).sin()).collect()
        })
        .collect();
    let weights: Vec<T> = (1..=modes)
        .map(|k| {
            let w = T::pi() * T::lit(k as f64);
            T::one() / (T::lit(2.0) * (w * w + T::one()))
        })
        .collect();
    let values = a
        .fields
        .iter()
        .zip(&b.fields)
        .map(|(fa, fb)| {
            let mut v = T::zero();
            for s in 0..3 {
                for (psi, wk) in basis.iter().zip(&weights) {
                    let c: T = (0..g.cells())
                        .map(|i| (fa.rho[s][i] - fb.rho[s][i]) * psi[i])
                        .sum::<T>()
                        * h;
                    v += *wk * c * c;
                }
            }
            v
        })
        .collect();
    Ok(EnergySeries {
        times: a.times.clone(),
        values,
    })
}

/// `W(t) = (1/2) sum_a ||rhobar^a_t||^2`, midpoint rule.
pub fn energy_w<T: Scalar>(a: &PdeSolution<T>, b: &PdeSolution<T>) -> Result<EnergySeries<T>, PdeError> {
    check_pair(a, b)?;
    let h = a.grid.h();
    let values = a
        .fields
        .iter()
        .zip(&b.fields)
        .map(|(fa, fb)| {
            let s: T = (0..3)
                .flat_map(|s| {
                    fa.rho[s]
                        .iter()
                        .zip(&fb.rho[s])
                        .map(|(x, y)| (*x - *y) * (*x - *y))
                })
                .sum();
            T::lit(0.5) * h * s
        })
        .collect();
    Ok(EnergySeries {
        times: a.times.clone(),
        values,
    })
}

/// Smallest `C` with `E(t) <= E(0) exp(C t)` on the series. `None` when
/// `E(0) = 0` or a value is not finite.
pub fn gronwall_rate<T: Scalar>(e: &EnergySeries<T>) -> Option<T> {
    let e0 = *e.values.first()?;
    if !(e0 > T::zero()) {
        return None;
    }
    let mut rate = T::neg_infinity();
    for (t, v) in e.times.iter().zip(&e.values).skip(1) {
        if !v.is_finite() || *t <= T::zero() {
            return None;
        }
        if *v <= T::zero() {
            continue;
        }
        rate = rate.max((*v / e0).ln() / *t);
    }
    rate.is_finite().then_some(rate)
}

/// Least-squares slope of `ln E` against `t` over the positive values.
pub fn fit_exponential_rate<T: Scalar>(e: &EnergySeries<T>) -> Option<T> {
    let pts: Vec<(T, T)> = e
        .times
        .iter()
        .zip(&e.values)
        .filter(|(_, v)| **v > T::zero() && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::lit(pts.len() as f64);
    let mt = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|(t, y)| (*t - mt) * (*y - my)).sum();
    let sxx: T = pts.iter().map(|(t, _)| (*t - mt) * (*t - mt)).sum();
    if !(sxx > T::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

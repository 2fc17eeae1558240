//! Analytic test functions `phi(t, u) = exp(-decay * t) * psi(u)` with
//! closed-form derivatives.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Spatial factor `psi(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape<T> {
    Constant(T),
    Affine {
        c0: T,
        c1: T,
    },
    /// `offset + cos(k pi u)`.
    Cosine {
        k: u32,
        offset: T,
    },
    /// `(1 + weight u) * ((u - a)(b - u))^8 / ((b - a)/2)^16` on `[a, b]`, zero
    /// outside. Seven continuous derivatives; support strictly inside `(0, 1)`
    /// when `0 < a < b < 1`.
    Bump {
        a: T,
        b: T,
        weight: T,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction<T> {
    pub shape: Shape<T>,
    /// Exponential time decay rate; zero for time-independent functions.
    pub decay: T,
}

impl<T: Scalar> TestFunction<T> {
    pub fn stationary(shape: Shape<T>) -> Self {
        TestFunction {
            shape,
            decay: T::zero(),
        }
    }

    pub fn decaying(shape: Shape<T>, decay: T) -> Self {
        TestFunction { shape, decay }
    }

    pub fn bump(a: f64, b: f64, weight: f64) -> Self {
        Self::stationary(Shape::Bump {
            a: T::lit(a),
            b: T::lit(b),
            weight: T::lit(weight),
        })
    }

    pub fn cosine(k: u32, offset: f64) -> Self {
        Self::stationary(Shape::Cosine {
            k,
            offset: T::lit(offset),
        })
    }

    pub fn is_time_dependent(&self) -> bool {
        self.decay != T::zero()
    }

    /// True when `phi`, `phi'` and `phi''` vanish at both ends of `[0, 1]`.
    pub fn is_compactly_supported(&self) -> bool {
        match self.shape {
            Shape::Bump { a, b, .. } => a > T::zero() && b < T::one() && a < b,
            _ => false,
        }
    }

    #[inline]
    pub fn time_factor(&self, t: T) -> T {
        (-self.decay * t).exp()
    }

    /// `(psi, psi', psi'')` at `u`.
    pub fn spatial(&self, u: T) -> (T, T, T) {
        let zero = T::zero();
        match self.shape {
            Shape::Constant(c) => (c, zero, zero),
            Shape::Affine { c0, c1 } => (c0 + c1 * u, c1, zero),
            Shape::Cosine { k, offset } => {
                let w = T::pi() * T::lit(k as f64);
                let (s, c) = (w * u).sin_cos();
                (offset + c, -w * s, -w * w * c)
            }
            Shape::Bump { a, b, weight } => {
                if u <= a || u >= b {
                    return (zero, zero, zero);
                }
                let half = (b - a) / T::lit(2.0);
                let norm = half.powi(16).recip();
                let p = (u - a) * (b - u);
                let dp = a + b - T::lit(2.0) * u;
                let ddp = T::lit(-2.0);
                let bv = norm * p.powi(8);
                let db = norm * T::lit(8.0) * p.powi(7) * dp;
                let ddb = norm * T::lit(8.0) * (T::lit(7.0) * p.powi(6) * dp * dp + p.powi(7) * ddp);
                let lin = T::one() + weight * u;
                (
                    lin * bv,
                    weight * bv + lin * db,
                    T::lit(2.0) * weight * db + lin * ddb,
                )
            }
        }
    }

    pub fn value(&self, t: T, u: T) -> T {
        self.time_factor(t) * self.spatial(u).0
    }

    pub fn dt(&self, t: T, u: T) -> T {
        -self.decay * self.value(t, u)
    }

    pub fn du(&self, t: T, u: T) -> T {
        self.time_factor(t) * self.spatial(u).1
    }

    pub fn duu(&self, t: T, u: T) -> T {
        self.time_factor(t) * self.spatial(u).2
    }

    /// `u -> phi(t, u)` as a closure, for empirical pairings.
    pub fn at(&self, t: T) -> impl Fn(T) -> T + '_ {
        move |u| self.value(t, u)
    }

    /// Compactly supported family used for Dirichlet weak residuals.
    pub fn dirichlet_family() -> Vec<Self> {
        vec![
            Self::bump(0.2, 0.8, 0.0),
            Self::bump(0.1, 0.5, 1.0),
            Self::bump(0.4, 0.95, -0.5),
        ]
    }

    /// Unrestricted family used for Robin weak residuals, including a
    /// time-dependent member.
    pub fn robin_family() -> Vec<Self> {
        vec![
            Self::stationary(Shape::Constant(T::one())),
            Self::stationary(Shape::Affine {
                c0: T::lit(0.5),
                c1: T::one(),
            }),
            Self::cosine(1, 0.0),
            Self::decaying(
                Shape::Cosine {
                    k: 2,
                    offset: T::lit(1.0),
                },
                T::one(),
            ),
            Self::bump(0.2, 0.8, 0.0),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff_check(f: &TestFunction<f64>) {
        let h = 1e-5;
        for i in 1..50 {
            let u = i as f64 / 50.0;
            let t = 0.3;
            let d1 = (f.value(t, u + h) - f.value(t, u - h)) / (2.0 * h);
            let d2 = (f.du(t, u + h) - f.du(t, u - h)) / (2.0 * h);
            let dt = (f.value(t + h, u) - f.value(t - h, u)) / (2.0 * h);
            let scale = 1.0 + f.du(t, u).abs() + f.duu(t, u).abs();
            assert!((d1 - f.du(t, u)).abs() < 1e-6 * scale, "{f:?} u={u}");
            assert!((d2 - f.duu(t, u)).abs() < 1e-5 * scale, "{f:?} u={u}");
            assert!((dt - f.dt(t, u)).abs() < 1e-6 * scale, "{f:?} u={u}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for f in TestFunction::<f64>::robin_family()
            .iter()
            .chain(TestFunction::dirichlet_family().iter())
        {
            finite_diff_check(f);
        }
    }

    #[test]
    fn bumps_vanish_with_derivatives_at_ends() {
        for f in TestFunction::<f64>::dirichlet_family() {
            assert!(f.is_compactly_supported());
            for u in [0.0, 1.0] {
                assert_eq!(f.value(0.0, u), 0.0);
                assert_eq!(f.du(0.0, u), 0.0);
                assert_eq!(f.duu(0.0, u), 0.0);
            }
        }
        assert!(!TestFunction::<f64>::cosine(1, 0.0).is_compactly_supported());
    }

    #[test]
    fn single_precision_agrees() {
        let f64v = TestFunction::<f64>::bump(0.2, 0.8, 0.5).value(0.0, 0.4);
        let f32v = TestFunction::<f32>::bump(0.2, 0.8, 0.5).value(0.0, 0.4);
        assert!((f64v - f32v as f64).abs() < 1e-5);
    }
}

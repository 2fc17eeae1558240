//! Initial density profiles `u -> (rho_A, rho_B, rho_E)` on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Named initial-profile presets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProfilePreset {
    Constant([f64; 3]),
    /// Linear interpolation from `left` at `u = 0` to `right` at `u = 1`.
    Linear {
        left: [f64; 3],
        right: [f64; 3],
    },
    /// `left` on `[0, u0)`, `right` on `[u0, 1]`.
    Step {
        u0: f64,
        left: [f64; 3],
        right: [f64; 3],
    },
    /// `base` with a smooth bump of height `amplitude` centred at `center`
    /// transferring mass from holes to species A.
    Bump {
        base: [f64; 3],
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl ProfilePreset {
    pub fn eval(&self, u: f64) -> [f64; 3] {
        match *self {
            ProfilePreset::Constant(c) => c,
            ProfilePreset::Linear { left, right } => [0, 1, 2].map(|i| left[i] + (right[i] - left[i]) * u),
            ProfilePreset::Step { u0, left, right } => {
                if u < u0 {
                    left
                } else {
                    right
                }
            }
            ProfilePreset::Bump {
                base,
                amplitude,
                center,
                width,
            } => {
                let z = (u - center) / width;
                let b = if z.abs() < 1.0 { (1.0 - z * z).powi(3) } else { 0.0 };
                [base[0] + amplitude * b, base[1], base[2] - amplitude * b]
            }
        }
    }

    pub fn eval_as<T: Scalar>(&self, u: T) -> [T; 3] {
        self.eval(u.as_f64()).map(T::lit)
    }

    /// Checks that the profile is a probability triple on a fine sample of `[0, 1]`.
    pub fn check(&self) -> Result<(), String> {
        for k in 0..=1000 {
            let u = k as f64 / 1000.0;
            let v = self.eval(u);
            if let Some(msg) = probability_triple_error(v) {
                return Err(format!("profile at u = {u}: {msg}"));
            }
        }
        Ok(())
    }
}

/// `None` when `v` is a probability triple (tolerance 1e-9 on the sum).
pub fn probability_triple_error(v: [f64; 3]) -> Option<String> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Some(format!("negative or non-finite entry in {v:?}"));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Some(format!("entries {v:?} sum to {s}"));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_probability_triples() {
        let presets = [
            ProfilePreset::Constant([0.2, 0.3, 0.5]),
            ProfilePreset::Linear {
                left: [0.5, 0.3, 0.2],
                right: [0.2, 0.3, 0.5],
            },
            ProfilePreset::Step {
                u0: 0.4,
                left: [1.0, 0.0, 0.0],
                right: [0.0, 0.5, 0.5],
            },
            ProfilePreset::Bump {
                base: [0.3, 0.3, 0.4],
                amplitude: 0.3,
                center: 0.5,
                width: 0.2,
            },
        ];
        for p in presets {
            p.check().unwrap();
        }
    }

    #[test]
    fn linear_hits_endpoints() {
        let p = ProfilePreset::Linear {
            left: [0.5, 0.3, 0.2],
            right: [0.2, 0.3, 0.5],
        };
        assert_eq!(p.eval(0.0), [0.5, 0.3, 0.2]);
        assert_eq!(p.eval(1.0), [0.2, 0.3, 0.5]);
    }

    #[test]
    fn overfull_bump_is_rejected() {
        let p = ProfilePreset::Bump {
            base: [0.3, 0.3, 0.4],
            amplitude: 0.5,
            center: 0.5,
            width: 0.2,
        };
        assert!(p.check().is_err());
    }
}

//! Microscopic jump rates (before the diffusive `N^2` speed-up).

use crate::species::{ModelParams, ReservoirDensities, Species};

/// Which boundary reservoir.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Direction of a boundary flip: `Up` replaces `s` by `s + 1`, `Down` by `s - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    #[inline]
    pub const fn offset(self) -> i32 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

/// Rate constants of the generator, shared by the simulator and the exact oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateTable {
    pub n: usize,
    /// `1 + beta/2N`, for pairs (s+1, s).
    pub bulk_fast: f64,
    /// `1 - beta/2N`, for pairs (s, s+1).
    pub bulk_slow: f64,
    pub left_up: f64,
    pub left_down: f64,
    pub right_up: f64,
    pub right_down: f64,
    pub left: ReservoirDensities,
    pub right: ReservoirDensities,
}

impl RateTable {
    pub fn new(p: &ModelParams) -> Self {
        let n = p.n as f64;
        let sym = n.powf(-p.delta);
        let asym = 0.5 * p.beta_tilde * n.powf(-p.theta);
        RateTable {
            n: p.n,
            bulk_fast: 1.0 + p.beta / (2.0 * n),
            bulk_slow: 1.0 - p.beta / (2.0 * n),
            left_up: sym + asym,
            left_down: sym - asym,
            right_up: sym - asym,
            right_down: sym + asym,
            left: p.left,
            right: p.right,
        }
    }

    /// Negative-control fixture: flips the sign of the boundary asymmetry on the
    /// right reservoir only. Checks comparing against the exact oracle must fail.
    pub fn inject_right_sign_fault(&mut self) {
        std::mem::swap(&mut self.right_up, &mut self.right_down);
    }

    /// Exchange rate of the ordered pair `(eta(x), eta(x+1))`; zero for equal species.
    #[inline]
    pub fn bulk(&self, left: Species, right: Species) -> f64 {
        if left == right {
            0.0
        } else if right == left.cyclic_next(1) {
            self.bulk_slow
        } else {
            self.bulk_fast
        }
    }

    #[inline]
    pub fn bulk_max(&self) -> f64 {
        self.bulk_fast.max(self.bulk_slow)
    }

    #[inline]
    pub fn densities(&self, side: Side) -> &ReservoirDensities {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// `(c_plus, c_minus)` at a boundary site currently holding `s`. The new
    /// species after a flip is drawn with weight equal to its reservoir density.
    #[inline]
    pub fn flip(&self, side: Side, s: Species) -> (f64, f64) {
        let (up, down, r) = match side {
            Side::Left => (self.left_up, self.left_down, &self.left),
            Side::Right => (self.right_up, self.right_down, &self.right),
        };
        (up * r.get(s.cyclic_next(1)), down * r.get(s.cyclic_next(-1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams {
            n: 10,
            beta: 1.0,
            beta_tilde: 1.0,
            theta: 1.0,
            delta: 1.0,
            left: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
            right: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
        }
    }

    #[test]
    fn bulk_table() {
        let t = RateTable::new(&params());
        use Species::*;
        for (a, b) in [(A, B), (B, Empty), (Empty, A)] {
            assert!((t.bulk(a, b) - 0.95).abs() < 1e-15);
            assert!((t.bulk(b, a) - 1.05).abs() < 1e-15);
        }
        for s in Species::ALL {
            assert_eq!(t.bulk(s, s), 0.0);
        }
    }

    #[test]
    fn boundary_examples() {
        let t = RateTable::new(&params());
        let (up, down) = t.flip(Side::Left, Species::A);
        assert!((up - 0.045).abs() < 1e-15);
        assert!((down - 0.01).abs() < 1e-15);
        let (up, _) = t.flip(Side::Right, Species::A);
        assert!((up - 0.015).abs() < 1e-15);
    }

    #[test]
    fn fault_only_touches_right_side() {
        let good = RateTable::new(&params());
        let mut bad = good;
        bad.inject_right_sign_fault();
        assert_eq!(
            good.flip(Side::Left, Species::B),
            bad.flip(Side::Left, Species::B)
        );
        assert_ne!(
            good.flip(Side::Right, Species::B),
            bad.flip(Side::Right, Species::B)
        );
    }
}

//! Exact-in-law continuous-time simulation of the boundary-driven ABC process.
//!
//! The clock is macroscopic: a microscopic time `s` corresponds to `s / N^2`.
//! Events are drawn by class-partitioned thinning. Bulk proposals pick a
//! uniformly random *active* bond (one holding two different species) and are
//! accepted with probability `rate / (1 + beta/2N)`. Boundary events come from
//! an exact four-entry table. Rejected proposals are self-loops, so the jump
//! chain and holding times have exactly the law of the Markov process.

mod io;
mod run;

pub use io::{read_trajectory, write_trajectory, TRAJECTORY_MAGIC};
pub use run::{
    replica_seed, replicas, rng_for, sample_initial, simulate, simulate_with_rates, SimObserver, SimRng,
    Simulation, Snapshot, Trajectory,
};

use rand::Rng;
use thiserror::Error;

use crate::rates::{Direction, RateTable, Side};
use crate::species::{ModelParams, ParamError, Species};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("bond {x} outside 1..={max}")]
    BondOutOfRange { x: usize, max: usize },
    #[error("site {site} is not a boundary site (1 or {last})")]
    NotBoundarySite { site: usize, last: usize },
    #[error("occupancy has length {got}, expected N - 1 = {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("total event rate is zero")]
    ZeroTotalRate,
    #[error("rate cache out of sync: cached {cached}, recomputed {fresh}")]
    CacheInconsistent { cached: f64, fresh: f64 },
    #[error("initial profile at u = {u} is not a probability triple: {reason}")]
    InvalidProfile { u: f64, reason: String },
    #[error("snapshot schedule invalid: {0}")]
    Schedule(String),
}

/// What happened in one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Exchange of sites `x` and `x + 1`.
    BondSwap(usize),
    BoundaryFlip {
        site: usize,
        direction: Direction,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventOutcome {
    pub kind: EventKind,
    /// Macroscopic time elapsed since the previous event.
    pub waiting_time: f64,
}

const INACTIVE: u32 = u32::MAX;
/// Full re-sync period of the bulk rate bookkeeping.
pub const RESYNC_PERIOD: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BondClass {
    Idle,
    Slow,
    Fast,
}

/// Configuration `eta` on sites `1..=N-1` plus cached event-rate bookkeeping.
#[derive(Clone, Debug)]
pub struct LatticeState {
    rates: RateTable,
    occupancy: Vec<Species>,
    clock: f64,
    /// Bonds with nonzero rate; indexable for uniform proposals.
    active: Vec<u32>,
    /// Position of each bond in `active`, or `INACTIVE`. Indexed by `x - 1`.
    slot: Vec<u32>,
    class: Vec<BondClass>,
    n_fast: usize,
    events: u64,
}

impl LatticeState {
    pub fn new(params: &ModelParams, occupancy: Vec<Species>) -> Result<Self, SimError> {
        let params = params.validate()?;
        Self::with_rates(RateTable::new(&params), occupancy)
    }

    /// Builds a state from an explicit rate table (used for fault injection).
    pub fn with_rates(rates: RateTable, occupancy: Vec<Species>) -> Result<Self, SimError> {
        let expected = rates.n - 1;
        if occupancy.len() != expected {
            return Err(SimError::LengthMismatch {
                got: occupancy.len(),
                expected,
            });
        }
        let bonds = expected - 1;
        let mut state = LatticeState {
            rates,
            occupancy,
            clock: 0.0,
            active: Vec::with_capacity(bonds),
            slot: vec![INACTIVE; bonds],
            class: vec![BondClass::Idle; bonds],
            n_fast: 0,
            events: 0,
        };
        state.resync();
        Ok(state)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.rates.n
    }

    #[inline]
    pub fn occupancy(&self) -> &[Species] {
        &self.occupancy
    }

    #[inline]
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub(crate) fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    #[inline]
    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    #[inline]
    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Species at site `x` in `1..=N-1`.
    #[inline]
    pub fn at(&self, x: usize) -> Species {
        self.occupancy[x - 1]
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.occupancy {
            c[s.index()] += 1;
        }
        c
    }

    fn check_bond(&self, x: usize) -> Result<(), SimError> {
        let max = self.n() - 2;
        if x == 0 || x > max {
            return Err(SimError::BondOutOfRange { x, max });
        }
        Ok(())
    }

    fn boundary_side(&self, site: usize) -> Result<Side, SimError> {
        let last = self.n() - 1;
        if site == 1 {
            Ok(Side::Left)
        } else if site == last {
            Ok(Side::Right)
        } else {
            Err(SimError::NotBoundarySite { site, last })
        }
    }

    /// Exchange rate of bond `(x, x+1)`, microscopic units.
    pub fn bulk_rate(&self, x: usize) -> Result<f64, SimError> {
        self.check_bond(x)?;
        Ok(self.rates.bulk(self.at(x), self.at(x + 1)))
    }

    /// `(c_plus, c_minus)` at boundary site `1` or `N - 1`.
    pub fn boundary_rates(&self, site: usize) -> Result<(f64, f64), SimError> {
        let side = self.boundary_side(site)?;
        Ok(self.flip_rates(side))
    }

    #[inline]
    pub fn flip_rates(&self, side: Side) -> (f64, f64) {
        let site = self.side_site(side);
        self.rates.flip(side, self.at(site))
    }

    #[inline]
    pub fn side_site(&self, side: Side) -> usize {
        match side {
            Side::Left => 1,
            Side::Right => self.n() - 1,
        }
    }

    pub fn bulk_rate_sum(&self) -> f64 {
        let n_slow = self.active.len() - self.n_fast;
        self.n_fast as f64 * self.rates.bulk_fast + n_slow as f64 * self.rates.bulk_slow
    }

    pub fn boundary_rate_sum(&self) -> f64 {
        let (a, b) = self.flip_rates(Side::Left);
        let (c, d) = self.flip_rates(Side::Right);
        a + b + c + d
    }

    pub fn total_rate(&self) -> f64 {
        self.bulk_rate_sum() + self.boundary_rate_sum()
    }

    /// Bulk rate sum recomputed from scratch.
    pub fn recompute_bulk_rate_sum(&self) -> f64 {
        self.occupancy
            .windows(2)
            .map(|w| self.rates.bulk(w[0], w[1]))
            .sum()
    }

    /// Errors when the cached bulk sum deviates from a fresh recomputation by
    /// more than 1e-9 relative.
    pub fn check_caches(&self) -> Result<(), SimError> {
        let cached = self.bulk_rate_sum();
        let fresh = self.recompute_bulk_rate_sum();
        if (cached - fresh).abs() > 1e-9 * fresh.abs().max(1.0) {
            return Err(SimError::CacheInconsistent { cached, fresh });
        }
        for (i, &x) in self.active.iter().enumerate() {
            if self.slot[x as usize - 1] != i as u32 {
                return Err(SimError::CacheInconsistent { cached, fresh });
            }
        }
        Ok(())
    }

    /// Rebuilds the active-bond bookkeeping from the occupancy.
    pub fn resync(&mut self) {
        self.active.clear();
        self.n_fast = 0;
        for x in 1..=self.n() - 2 {
            self.slot[x - 1] = INACTIVE;
            self.class[x - 1] = BondClass::Idle;
            self.refresh_bond(x);
        }
    }

    fn classify(&self, x: usize) -> BondClass {
        let r = self.rates.bulk(self.at(x), self.at(x + 1));
        if r == 0.0 {
            BondClass::Idle
        } else if r == self.rates.bulk_fast {
            BondClass::Fast
        } else {
            BondClass::Slow
        }
    }

    fn refresh_bond(&mut self, x: usize) {
        let i = x - 1;
        let new = self.classify(x);
        let old = self.class[i];
        if old == new {
            return;
        }
        if old == BondClass::Fast {
            self.n_fast -= 1;
        }
        if new == BondClass::Fast {
            self.n_fast += 1;
        }
        match (old == BondClass::Idle, new == BondClass::Idle) {
            (true, false) => {
                self.slot[i] = self.active.len() as u32;
                self.active.push(x as u32);
            }
            (false, true) => {
                let pos = self.slot[i] as usize;
                self.active.swap_remove(pos);
                if let Some(&moved) = self.active.get(pos) {
                    self.slot[moved as usize - 1] = pos as u32;
                }
                self.slot[i] = INACTIVE;
            }
            _ => {}
        }
        self.class[i] = new;
    }

    fn refresh_around(&mut self, site: usize) {
        let last_bond = self.n() - 2;
        let lo = site.saturating_sub(1).max(1);
        let hi = site.min(last_bond);
        for x in lo..=hi {
            self.refresh_bond(x);
        }
    }

    /// Exchanges sites `x` and `x + 1` and updates the caches locally.
    pub fn apply_swap(&mut self, x: usize) -> Result<(), SimError> {
        self.check_bond(x)?;
        self.occupancy.swap(x - 1, x);
        self.refresh_around(x);
        self.refresh_around(x + 1);
        Ok(())
    }

    /// Replaces the species at a boundary site by its cyclic successor (`Up`)
    /// or predecessor (`Down`).
    pub fn apply_flip(&mut self, site: usize, direction: Direction) -> Result<(), SimError> {
        self.boundary_side(site)?;
        self.flip_site(site, direction);
        Ok(())
    }

    fn flip_site(&mut self, site: usize, direction: Direction) {
        let s = self.occupancy[site - 1];
        self.occupancy[site - 1] = s.cyclic_next(direction.offset());
        self.refresh_around(site);
    }

    pub fn apply_event(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::BondSwap(x) => self.apply_swap(x)?,
            EventKind::BoundaryFlip { site, direction } => {
                let last = self.n() - 1;
                if site != 1 && site != last {
                    return Err(SimError::NotBoundarySite { site, last });
                }
                self.flip_site(site, direction);
            }
        }
        self.events += 1;
        if self.events.is_multiple_of(RESYNC_PERIOD) {
            self.check_caches()?;
            self.resync();
        }
        Ok(())
    }

    /// Samples the next jump without applying it: returns the macroscopic
    /// holding time and the event.
    pub fn sample_next<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, EventKind), SimError> {
        let speed = (self.n() * self.n()) as f64;
        let cap = self.rates.bulk_max();
        let bulk_bound = self.active.len() as f64 * cap;
        let (lu, ld) = self.flip_rates(Side::Left);
        let (ru, rd) = self.flip_rates(Side::Right);
        let table = [lu, ld, ru, rd];
        let total = bulk_bound + lu + ld + ru + rd;
        if !(total > 0.0) {
            return Err(SimError::ZeroTotalRate);
        }
        let rate = speed * total;
        let mut waited = 0.0;
        loop {
            let e: f64 = rng.random();
            waited += -(1.0 - e).ln() / rate;
            let u = rng.random::<f64>() * total;
            if u < bulk_bound {
                let x = self.active[rng.random_range(0..self.active.len())] as usize;
                let r = self.rates.bulk(self.at(x), self.at(x + 1));
                if rng.random::<f64>() * cap < r {
                    return Ok((waited, EventKind::BondSwap(x)));
                }
                continue;
            }
            let mut acc = bulk_bound;
            let last = self.n() - 1;
            let events = [
                (1, Direction::Up),
                (1, Direction::Down),
                (last, Direction::Up),
                (last, Direction::Down),
            ];
            for (k, &w) in table.iter().enumerate() {
                acc += w;
                if u < acc && w > 0.0 {
                    let (site, direction) = events[k];
                    return Ok((waited, EventKind::BoundaryFlip { site, direction }));
                }
            }
            // Rounding put `u` at the top edge: take the last nonzero entry.
            let k = table
                .iter()
                .rposition(|w| *w > 0.0)
                .ok_or(SimError::ZeroTotalRate)?;
            let (site, direction) = events[k];
            return Ok((waited, EventKind::BoundaryFlip { site, direction }));
        }
    }

    /// Samples and applies one jump, advancing the clock.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventOutcome, SimError> {
        let (waiting_time, kind) = self.sample_next(rng)?;
        self.clock += waiting_time;
        self.apply_event(kind)?;
        Ok(EventOutcome { kind, waiting_time })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::species::ReservoirDensities;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use Species::*;

    pub(crate) fn params(n: usize) -> ModelParams {
        ModelParams {
            n,
            beta: 1.0,
            beta_tilde: 1.0,
            theta: 1.0,
            delta: 1.0,
            left: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
            right: ReservoirDensities::new(0.5, 0.3, 0.2).unwrap(),
        }
    }

    fn species_strategy() -> impl Strategy<Value = Species> {
        (0u8..3).prop_map(|c| Species::from_code(c).unwrap())
    }

    #[test]
    fn rate_examples() {
        let mut occ = vec![A; 9];
        occ[0] = A;
        occ[1] = B;
        let st = LatticeState::new(&params(10), occ.clone()).unwrap();
        assert!((st.bulk_rate(1).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(st.bulk_rate(3).unwrap(), 0.0);
        occ.swap(0, 1);
        let st = LatticeState::new(&params(10), occ).unwrap();
        assert!((st.bulk_rate(1).unwrap() - 1.05).abs() < 1e-15);
        assert!(st.bulk_rate(9).is_err());
        assert!(st.bulk_rate(0).is_err());
    }

    #[test]
    fn boundary_rate_examples() {
        let st = LatticeState::new(&params(10), vec![A; 9]).unwrap();
        let (up, down) = st.boundary_rates(1).unwrap();
        assert!((up - 0.045).abs() < 1e-15);
        assert!((down - 0.01).abs() < 1e-15);
        let (up, _) = st.boundary_rates(9).unwrap();
        assert!((up - 0.015).abs() < 1e-15);
        assert!(st.boundary_rates(5).is_err());
    }

    #[test]
    fn swap_examples() {
        let mut st = LatticeState::new(&params(6), vec![A, B, Empty, A, B]).unwrap();
        st.apply_swap(1).unwrap();
        assert_eq!(st.occupancy(), &[B, A, Empty, A, B]);
        st.apply_swap(1).unwrap();
        assert_eq!(st.occupancy(), &[A, B, Empty, A, B]);
        assert!(st.apply_swap(5).is_err());
    }

    #[test]
    fn flip_examples() {
        let mut st = LatticeState::new(&params(5), vec![Empty, A, A, A]).unwrap();
        st.apply_flip(1, Direction::Up).unwrap();
        assert_eq!(st.at(1), A);
        st.apply_flip(1, Direction::Down).unwrap();
        assert_eq!(st.at(1), Empty);
        st.apply_flip(4, Direction::Down).unwrap();
        assert_eq!(st.at(4), Empty);
        assert!(st.apply_flip(2, Direction::Up).is_err());
    }

    #[test]
    fn uniform_bulk_only_allows_boundary_events() {
        let mut st = LatticeState::new(&params(8), vec![B; 7]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let out = st.step(&mut rng).unwrap();
        assert!(matches!(out.kind, EventKind::BoundaryFlip { .. }));
    }

    #[test]
    fn caches_survive_long_runs() {
        let occ = (0..63)
            .map(|i| Species::from_code((i % 3) as u8).unwrap())
            .collect();
        let mut st = LatticeState::new(&params(64), occ).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            st.step(&mut rng).unwrap();
        }
        st.check_caches().unwrap();
    }

    proptest! {
        #[test]
        fn swap_conserves_counts_and_flip_moves_two(
            occ in proptest::collection::vec(species_strategy(), 7),
            x in 1usize..7,
            up in any::<bool>(),
        ) {
            let mut st = LatticeState::new(&params(8), occ).unwrap();
            let before = st.counts();
            st.apply_swap(x).unwrap();
            prop_assert_eq!(before, st.counts());
            st.check_caches().unwrap();

            let dir = if up { Direction::Up } else { Direction::Down };
            st.apply_flip(7, dir).unwrap();
            let after = st.counts();
            let moved: i64 = before.iter().zip(after.iter()).map(|(a, b)| (*a as i64 - *b as i64).abs()).sum();
            prop_assert_eq!(moved, 2);
            st.check_caches().unwrap();
            let back = if up { Direction::Down } else { Direction::Up };
            st.apply_flip(7, back).unwrap();
            prop_assert_eq!(before, st.counts());
        }

        #[test]
        fn rates_are_nonnegative(occ in proptest::collection::vec(species_strategy(), 5), bt in 0.0f64..1.99) {
            let p = ModelParams { beta_tilde: bt, ..params(6) };
            let st = LatticeState::new(&p, occ).unwrap();
            for x in 1..=4 {
                prop_assert!(st.bulk_rate(x).unwrap() >= 0.0);
            }
            for site in [1, 5] {
                let (a, b) = st.boundary_rates(site).unwrap();
                prop_assert!(a >= 0.0 && b >= 0.0);
            }
        }
    }
}

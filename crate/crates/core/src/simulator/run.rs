use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EventKind, LatticeState, SimError};
use crate::profile::probability_triple_error;
use crate::rates::RateTable;
use crate::species::{ModelParams, Species};

/// Counter-based generator used for every replica.
pub type SimRng = ChaCha8Rng;

pub fn rng_for(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `k` derived from a base seed.
pub fn replica_seed(base: u64, k: u64) -> u64 {
    splitmix64(base ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Runs `f(k, seed_k)` for `k in 0..count` on the rayon pool. Results come
/// back ordered by replica index whatever the scheduling.
pub fn replicas<T, F>(count: usize, base_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|k| f(k, replica_seed(base_seed, k as u64)))
        .collect()
}

/// Draws each site independently with law `profile(x / N)`.
pub fn sample_initial<R, P>(profile: P, n: usize, rng: &mut R) -> Result<Vec<Species>, SimError>
where
    R: Rng + ?Sized,
    P: Fn(f64) -> [f64; 3],
{
    let mut occ = Vec::with_capacity(n.saturating_sub(1));
    for x in 1..n {
        let u = x as f64 / n as f64;
        let p = profile(u);
        if let Some(reason) = probability_triple_error(p) {
            return Err(SimError::InvalidProfile { u, reason });
        }
        let v: f64 = rng.random();
        let s = if v < p[0] {
            Species::A
        } else if v < p[0] + p[1] {
            Species::B
        } else {
            Species::Empty
        };
        occ.push(s);
    }
    Ok(occ)
}

/// Callbacks along a simulated path. Holding intervals are reported before
/// the jump that ends them.
pub trait SimObserver {
    fn hold(&mut self, _state: &LatticeState, _t0: f64, _t1: f64) {}
    fn before_event(&mut self, _state: &LatticeState, _kind: EventKind) {}
    fn after_event(&mut self, _state: &LatticeState, _kind: EventKind) {}
}

/// A lattice state driven by its own generator, with one look-ahead event so
/// the configuration at any requested time can be read off exactly.
pub struct Simulation<R: Rng = SimRng> {
    state: LatticeState,
    rng: R,
    pending: Option<(f64, EventKind)>,
}

impl Simulation<SimRng> {
    pub fn new(params: &ModelParams, initial: Vec<Species>, seed: u64) -> Result<Self, SimError> {
        Ok(Self::from_state(
            LatticeState::new(params, initial)?,
            rng_for(seed),
        ))
    }
}

impl<R: Rng> Simulation<R> {
    pub fn from_state(state: LatticeState, rng: R) -> Self {
        Simulation {
            state,
            rng,
            pending: None,
        }
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn into_state(self) -> LatticeState {
        self.state
    }

    /// Advances to macroscopic time `t`. `on_hold(state, t0, t1)` is called for
    /// every interval `[t0, t1]` on which the configuration is constant, the
    /// last one ending exactly at `t`. Afterwards `state()` is `eta_t`.
    pub fn advance_to<F>(&mut self, t: f64, on_hold: F) -> Result<(), SimError>
    where
        F: FnMut(&LatticeState, f64, f64),
    {
        struct Hold<F>(F);
        impl<F: FnMut(&LatticeState, f64, f64)> SimObserver for Hold<F> {
            fn hold(&mut self, state: &LatticeState, t0: f64, t1: f64) {
                (self.0)(state, t0, t1)
            }
        }
        self.advance_observed(t, &mut Hold(on_hold))
    }

    /// As [`Simulation::advance_to`], also reporting each jump before and
    /// after it is applied.
    pub fn advance_observed<O: SimObserver + ?Sized>(&mut self, t: f64, obs: &mut O) -> Result<(), SimError> {
        loop {
            let (when, kind) = match self.pending {
                Some(p) => p,
                None => {
                    let (wait, kind) = self.state.sample_next(&mut self.rng)?;
                    let p = (self.state.clock() + wait, kind);
                    self.pending = Some(p);
                    p
                }
            };
            if when > t {
                obs.hold(&self.state, self.state.clock(), t);
                self.state.set_clock(t);
                return Ok(());
            }
            obs.hold(&self.state, self.state.clock(), when);
            self.state.set_clock(when);
            obs.before_event(&self.state, kind);
            self.state.apply_event(kind)?;
            obs.after_event(&self.state, kind);
            self.pending = None;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub occupancy: Vec<Species>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    pub event_count: u64,
}

/// Simulates from `initial` and records `eta_t` at each snapshot time.
/// Deterministic in `(params, initial, seed)`.
pub fn simulate(
    params: &ModelParams,
    initial: Vec<Species>,
    t_end: f64,
    snapshot_times: &[f64],
    seed: u64,
) -> Result<Trajectory, SimError> {
    let params = params.validate()?;
    simulate_with_rates(
        &params,
        RateTable::new(&params),
        initial,
        t_end,
        snapshot_times,
        seed,
    )
}

/// As [`simulate`], with an explicit rate table (fault-injection fixtures).
pub fn simulate_with_rates(
    params: &ModelParams,
    rates: RateTable,
    initial: Vec<Species>,
    t_end: f64,
    snapshot_times: &[f64],
    seed: u64,
) -> Result<Trajectory, SimError> {
    check_schedule(t_end, snapshot_times)?;
    let mut sim = Simulation::from_state(LatticeState::with_rates(rates, initial)?, rng_for(seed));
    let mut snapshots = Vec::with_capacity(snapshot_times.len().max(1));
    let times: Vec<f64> = if snapshot_times.is_empty() {
        vec![t_end]
    } else {
        snapshot_times.to_vec()
    };
    for &t in &times {
        sim.advance_to(t, |_, _, _| {})?;
        snapshots.push(Snapshot {
            time: t,
            occupancy: sim.state().occupancy().to_vec(),
        });
    }
    if sim.state().clock() < t_end {
        sim.advance_to(t_end, |_, _, _| {})?;
    }
    Ok(Trajectory {
        params: *params,
        seed,
        snapshots,
        event_count: sim.state().event_count(),
    })
}

fn check_schedule(t_end: f64, times: &[f64]) -> Result<(), SimError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(SimError::Schedule(format!("t_end = {t_end}")));
    }
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(SimError::Schedule(format!(
                "times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0 && **t <= t_end)) {
        return Err(SimError::Schedule(format!("time {t} outside [0, {t_end}]")));
    }
    Ok(())
}

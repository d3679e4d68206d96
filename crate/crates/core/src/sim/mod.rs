//! Exact event-driven simulation of the urn chain.
//!
//! Rates never depend on the state, so event epochs form a homogeneous
//! Poisson process of intensity `total_rate` and event identities are i.i.d.
//! draws from a fixed categorical law (sampled through an alias table).

mod observe;
mod rates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::{ensure_valid, ModelSpec, UrnCoefficients};

pub use observe::{fluctuation_field, observe, Observables, UrnTestFunction};
pub use rates::{Event, RateTable};

pub type SimRng = ChaCha8Rng;

/// Generator for replica `replica` of an experiment seeded with `seed`.
///
/// Each replica gets its own ChaCha stream, so ensemble output does not
/// depend on how replicas are scheduled across threads.
pub fn substream(seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrnState {
    pub values: Vec<f64>,
    pub time: f64,
}

impl UrnState {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        UrnState { values, time }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i < n {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index: i, n })
    }
}

/// Refresh event at 0-based urn `i`: `x(i) <- c(i/N) x(i)`.
pub fn apply_refresh(state: &UrnState, i: usize, spec: &ModelSpec) -> Result<UrnState> {
    let n = state.n();
    check_index(i, n)?;
    let u = (i + 1) as f64 / n as f64;
    let mut next = state.clone();
    next.values[i] = spec.c.eval1(u) * state.values[i];
    Ok(next)
}

/// Interaction event on the ordered pair `(i, j)` (0-based), reading both
/// coordinates before either is written.
pub fn apply_interaction(
    state: &UrnState,
    i: usize,
    j: usize,
    spec: &ModelSpec,
) -> Result<UrnState> {
    let n = state.n();
    check_index(i, n)?;
    check_index(j, n)?;
    if i == j {
        return Err(Error::invalid("interaction requires two distinct urns"));
    }
    let (u, v) = ((i + 1) as f64 / n as f64, (j + 1) as f64 / n as f64);
    let (xi, xj) = (state.values[i], state.values[j]);
    let mut next = state.clone();
    next.values[i] = spec.a1.eval2(u, v) * xi + spec.a2.eval2(u, v) * xj;
    next.values[j] = spec.a3.eval2(u, v) * xi + spec.a4.eval2(u, v) * xj;
    Ok(next)
}

/// Snapshots of one trajectory plus the number of events it contained.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<UrnState>,
    pub events: u64,
}

/// A model discretised on `n` urns, ready to generate trajectories.
#[derive(Debug)]
pub struct Simulator {
    coef: UrnCoefficients,
    rates: RateTable,
}

impl Simulator {
    pub fn new(spec: &ModelSpec, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 urns, got {n}")));
        }
        ensure_valid(spec)?;
        let coef = UrnCoefficients::new(spec, n);
        let rates = RateTable::from_coefficients(&coef)?;
        Ok(Simulator { coef, rates })
    }

    pub fn n(&self) -> usize {
        self.coef.n
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    pub fn coefficients(&self) -> &UrnCoefficients {
        &self.coef
    }

    /// Independent Bernoulli(phi(i/N)) occupation.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> UrnState {
        let values = self
            .coef
            .phi
            .iter()
            .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            .collect();
        UrnState::new(values, 0.0)
    }

    #[inline]
    pub fn apply(&self, event: Event, values: &mut [f64]) {
        match event {
            Event::Refresh(i) => values[i] *= self.coef.c[i],
            Event::Interaction(i, j) => {
                let [a1, a2, a3, a4] = self.coef.a(i, j);
                let (xi, xj) = (values[i], values[j]);
                values[i] = a1 * xi + a2 * xj;
                values[j] = a3 * xi + a4 * xj;
            }
        }
    }

    /// Run one trajectory from a fresh initial state.
    pub fn run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        horizon: f64,
        snapshot_times: &[f64],
    ) -> Result<Trajectory> {
        let initial = self.initial_state(rng);
        self.run_from(rng, initial, horizon, snapshot_times, |_, _| {})
    }

    /// Run from `state`, calling `on_event` after every applied event.
    ///
    /// The snapshot at time `t` is the state after the last event at or
    /// before `t`.
    pub fn run_from<R, F>(
        &self,
        rng: &mut R,
        mut state: UrnState,
        horizon: f64,
        snapshot_times: &[f64],
        mut on_event: F,
    ) -> Result<Trajectory>
    where
        R: Rng + ?Sized,
        F: FnMut(Event, &UrnState),
    {
        validate_times(state.time, horizon, snapshot_times)?;
        let mut snapshots = Vec::with_capacity(snapshot_times.len());
        let mut pending = snapshot_times.iter().copied().peekable();
        let mut events = 0u64;
        let clock = if self.rates.total_rate() > 0.0 {
            Some(Exp::new(self.rates.total_rate()).map_err(|e| Error::Numerical(e.to_string()))?)
        } else {
            None
        };

        if let Some(clock) = clock {
            loop {
                let next = state.time + clock.sample(rng);
                while let Some(&t) = pending.peek() {
                    if t < next {
                        snapshots.push(UrnState::new(state.values.clone(), t));
                        pending.next();
                    } else {
                        break;
                    }
                }
                if next > horizon {
                    break;
                }
                // The sampler exists whenever total_rate > 0.
                let event = self.rates.sample(rng).expect("positive total rate");
                self.apply(event, &mut state.values);
                state.time = next;
                events += 1;
                on_event(event, &state);
            }
        }
        for t in pending {
            snapshots.push(UrnState::new(state.values.clone(), t));
        }
        Ok(Trajectory { snapshots, events })
    }
}

fn validate_times(start: f64, horizon: f64, snapshot_times: &[f64]) -> Result<()> {
    if !horizon.is_finite() || horizon < start {
        return Err(Error::invalid(format!("invalid horizon {horizon}")));
    }
    if snapshot_times.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("snapshot times must be sorted ascending"));
    }
    if let (Some(&first), Some(&last)) = (snapshot_times.first(), snapshot_times.last()) {
        if !(first >= start) || !(last <= horizon) {
            return Err(Error::invalid(format!(
                "snapshot times must lie in [{start}, {horizon}]"
            )));
        }
    }
    Ok(())
}

/// Simulate a single trajectory (replica stream 0 of `seed`).
pub fn simulate(
    spec: &ModelSpec,
    n: usize,
    horizon: f64,
    seed: u64,
    snapshot_times: &[f64],
) -> Result<Vec<UrnState>> {
    let sim = Simulator::new(spec, n)?;
    let mut rng = substream(seed, 0);
    Ok(sim.run(&mut rng, horizon, snapshot_times)?.snapshots)
}

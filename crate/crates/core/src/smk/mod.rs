//! Age-indexed discrete-time semi-Markov model.
//!
//! The model tracks a policyholder's health state together with the time
//! spent in it (the backward recurrence time) and the attained age. Every
//! quantity here is a pure function of an immutable [`Kernel`].

mod kernel;
mod phi;
mod survival;

pub use kernel::{CalendarModifier, Kernel, KernelBuilder, RowRef, StateSpace};
pub(crate) use kernel::{DenseRow, MASS_TOLERANCE};
pub use phi::{compute_phi, PhiTable};
pub use survival::{death_pmf, survival, SurvivalCurve};

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// A `(state, backward, age, time)` observation: the process is in `state`
/// at calendar `time`, entered it `backward` periods ago, and the
/// policyholder is `age` years old.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub state: usize,
    pub backward: u32,
    pub age: u32,
    pub time: i64,
}

impl Scenario {
    pub fn new(state: usize, backward: u32, age: u32, time: i64) -> Self {
        Self {
            state,
            backward,
            age,
            time,
        }
    }

    /// Calendar time of the last transition.
    pub fn entry_time(&self) -> i64 {
        self.time - self.backward as i64
    }

    /// Age at the last transition.
    pub fn entry_age(&self) -> u32 {
        self.age - self.backward
    }

    /// Age at calendar time zero; `age_at(t) = base_age + t`.
    pub fn base_age(&self) -> i64 {
        self.age as i64 - self.time
    }

    pub fn age_at(&self, time: i64) -> i64 {
        self.base_age() + time
    }

    /// Asserts `age = initial_age + time`.
    pub fn check_initial_age(&self, initial_age: u32) -> Result<()> {
        if self.base_age() == initial_age as i64 {
            Ok(())
        } else {
            Err(ModelError::InvalidInput(format!(
                "scenario age {} at time {} is inconsistent with initial age {initial_age}",
                self.age, self.time
            )))
        }
    }
}

fn check_times(from: i64, to: i64) -> Result<()> {
    if to < from {
        Err(ModelError::TimeOrder { from, to })
    } else {
        Ok(())
    }
}

/// Cumulated kernel `Q_ij(s; t)` for a sojourn in `i` entered at time `s`
/// and age `age_entry`: the probability of leaving to `j` by time `t`.
pub fn cumulate_kernel(
    kernel: &Kernel,
    i: usize,
    j: usize,
    age_entry: u32,
    s: i64,
    t: i64,
) -> Result<f64> {
    check_times(s, t)?;
    kernel.states().check(j)?;
    let row = kernel.row(i, age_entry as i64, s)?;
    let horizon = ((t - s) as usize).min(row.max_sojourn());
    Ok((1..=horizon).map(|d| row.q(j, d)).sum())
}

/// Sojourn survival `H̄_i(s; t) = 1 − Σ_j Q_ij(s; t)`.
///
/// Evaluated as the tail mass `Σ_j Σ_{d > t−s} q_ij`, which is exactly zero
/// once every remaining increment vanishes. The death state never leaves, so
/// its sojourn survival is identically one.
pub fn sojourn_survival(kernel: &Kernel, i: usize, age_entry: u32, s: i64, t: i64) -> Result<f64> {
    check_times(s, t)?;
    let row = kernel.dense_row(i, age_entry as i64, s)?;
    Ok(row.tail((t - s) as usize))
}

/// Embedded-chain probability `p_ij(s) = lim_t Q_ij(s; t)`.
pub fn embedded_probability(
    kernel: &Kernel,
    i: usize,
    j: usize,
    age_entry: u32,
    s: i64,
) -> Result<f64> {
    kernel.states().check(i)?;
    if kernel.states().is_death(i) {
        return Err(ModelError::FromDeathState);
    }
    cumulate_kernel(kernel, i, j, age_entry, s, s + kernel.max_sojourn() as i64)
}

/// Conditional waiting-time cdf `G_ij(s; t) = Q_ij(s; t) / p_ij(s)`, one
/// when `p_ij(s) = 0`.
pub fn waiting_time_cdf(
    kernel: &Kernel,
    i: usize,
    j: usize,
    age_entry: u32,
    s: i64,
    t: i64,
) -> Result<f64> {
    check_times(s, t)?;
    kernel.states().check(i)?;
    if kernel.states().is_death(i) {
        return Ok(1.0);
    }
    let p = embedded_probability(kernel, i, j, age_entry, s)?;
    if p == 0.0 {
        return Ok(1.0);
    }
    let q = cumulate_kernel(kernel, i, j, age_entry, s, t)?;
    Ok((q / p).min(1.0))
}

/// Checks the scenario, the horizon and the conditioning event of an origin.
/// Returns the origin's dense row and `H̄_i(s−u; s)` for living origins.
pub(crate) fn prepare_origin(
    kernel: &Kernel,
    origin: &Scenario,
    horizon: i64,
) -> Result<Option<(DenseRow, f64)>> {
    kernel.check_scenario(origin)?;
    check_times(origin.time, horizon)?;
    let end_age = origin.age_at(horizon);
    if end_age > kernel.max_age() as i64 {
        return Err(ModelError::BeyondMaxAge {
            time: horizon,
            age: end_age,
        });
    }
    if kernel.states().is_death(origin.state) {
        return Ok(None);
    }
    let row = kernel.dense_row(origin.state, origin.entry_age() as i64, origin.entry_time())?;
    let h0 = row.tail(origin.backward as usize);
    if h0 <= 0.0 {
        return Err(ModelError::ImpossibleConditioning {
            state: origin.state,
            backward: origin.backward,
            age: origin.age,
            time: origin.time,
        });
    }
    Ok(Some((row, h0)))
}

/// Lazily materialized fresh-start rows for entries at times `first..=last`.
pub(crate) struct RowCache<'k> {
    kernel: &'k Kernel,
    base_age: i64,
    first: i64,
    rows: Vec<Option<DenseRow>>,
}

impl<'k> RowCache<'k> {
    pub(crate) fn new(kernel: &'k Kernel, base_age: i64, first: i64, last: i64) -> Self {
        let span = (last - first + 1).max(0) as usize;
        Self {
            kernel,
            base_age,
            first,
            rows: vec![None; span * kernel.states().len()],
        }
    }

    pub(crate) fn get(&mut self, state: usize, time: i64) -> Result<&DenseRow> {
        let n = self.kernel.states().len();
        let k = (time - self.first) as usize * n + state;
        if self.rows[k].is_none() {
            let row = self.kernel.dense_row(state, self.base_age + time, time)?;
            self.rows[k] = Some(row);
        }
        Ok(self.rows[k].as_ref().expect("row materialized above"))
    }
}

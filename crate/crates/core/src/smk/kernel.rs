//! Age-indexed semi-Markov kernel storage.
//!
//! Increments `q(i, j, a, τ, d)` are the probability that a sojourn in `i`
//! entered at calendar time `τ` and age `a` ends after exactly `d` periods
//! with a transition into `j`. The kernel stores these increments directly;
//! the cumulated kernel `Q` is recovered by summation.
//!
//! Three layers make up a row `(i, a, τ)`:
//!
//! * a time-homogeneous base row indexed by `(i, a)`,
//! * an optional calendar modifier `c(τ)` multiplying every base increment,
//! * explicit rows keyed by `(i, a, τ)`, which replace the base row for that
//!   entry time and are not modified.
//!
//! With `force_absorption` set, whatever mass a living row is missing is put
//! on the death transition at the last admissible sojourn
//! `min(M, ω − a)`, so every sojourn ends by age `ω`.

use std::collections::BTreeMap;

use crate::error::{ModelError, Result};
use crate::smk::Scenario;

/// Residual row mass below this is treated as rounding noise.
pub(crate) const MASS_TOLERANCE: f64 = 1e-12;

/// Ordered health states with a designated absorbing death state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
    death: usize,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: Vec<S>, death_label: &str) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(ModelError::InvalidInput(
                "a state space needs at least two states".into(),
            ));
        }
        for (k, label) in labels.iter().enumerate() {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(ModelError::InvalidInput(format!(
                    "state label `{label}` must be non-empty and free of whitespace"
                )));
            }
            if labels[..k].contains(label) {
                return Err(ModelError::InvalidInput(format!(
                    "duplicate state label `{label}`"
                )));
            }
        }
        let death = labels
            .iter()
            .position(|l| l == death_label)
            .ok_or_else(|| ModelError::UnknownState(death_label.to_string()))?;
        Ok(Self { labels, death })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn death(&self) -> usize {
        self.death
    }

    pub fn is_death(&self, state: usize) -> bool {
        state == self.death
    }

    pub fn label(&self, state: usize) -> &str {
        &self.labels[state]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ModelError::UnknownState(label.to_string()))
    }

    /// Living (non-death) state indices in order.
    pub fn living(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&s| s != self.death)
    }

    pub fn check(&self, state: usize) -> Result<()> {
        if state < self.labels.len() {
            Ok(())
        } else {
            Err(ModelError::StateOutOfRange {
                index: state,
                len: self.labels.len(),
            })
        }
    }
}

/// Multiplicative calendar-time effect on base increments.
///
/// `factors[k]` applies to entry time `start + k`; earlier and later times
/// use the first and last factor respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarModifier {
    start: i64,
    factors: Vec<f64>,
}

impl CalendarModifier {
    pub fn new(start: i64, factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(ModelError::InvalidInput(
                "calendar modifier needs at least one factor".into(),
            ));
        }
        if let Some(bad) = factors.iter().find(|f| !f.is_finite() || **f < 0.0) {
            return Err(ModelError::InvalidInput(format!(
                "calendar factor {bad} must be finite and non-negative"
            )));
        }
        Ok(Self { start, factors })
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn factor(&self, time: i64) -> f64 {
        let last = self.factors.len() as i64 - 1;
        let k = (time - self.start).clamp(0, last);
        self.factors[k as usize]
    }
}

/// Read-only view of one kernel row `(i, a, τ)`.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    values: &'a [f64],
    scale: f64,
    max_sojourn: usize,
    death: usize,
    final_sojourn: usize,
    topup: f64,
}

impl RowRef<'_> {
    /// Increment for a transition into `to` after exactly `sojourn` periods.
    #[inline]
    pub fn q(&self, to: usize, sojourn: usize) -> f64 {
        if sojourn == 0 || sojourn > self.max_sojourn || self.values.is_empty() {
            return 0.0;
        }
        let v = self.values[to * self.max_sojourn + sojourn - 1] * self.scale;
        if to == self.death && sojourn == self.final_sojourn {
            v + self.topup
        } else {
            v
        }
    }

    pub fn max_sojourn(&self) -> usize {
        self.max_sojourn
    }

    /// Force-absorption top-up carried by this row.
    pub fn topup(&self) -> f64 {
        self.topup
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total increment mass of the row.
    pub fn total(&self) -> f64 {
        let n = self.values.len().checked_div(self.max_sojourn).unwrap_or(0);
        let mut sum = 0.0;
        for to in 0..n {
            for d in 1..=self.max_sojourn {
                sum += self.q(to, d);
            }
        }
        sum
    }
}

/// A row copied out with suffix sums, for the recursions.
#[derive(Debug, Clone)]
pub(crate) struct DenseRow {
    q: Vec<f64>,
    tail: Vec<f64>,
    max_sojourn: usize,
}

impl DenseRow {
    #[inline]
    pub(crate) fn q(&self, to: usize, sojourn: usize) -> f64 {
        if sojourn == 0 || sojourn > self.max_sojourn {
            0.0
        } else {
            self.q[to * self.max_sojourn + sojourn - 1]
        }
    }

    /// Probability that the sojourn lasts more than `elapsed` periods.
    #[inline]
    pub(crate) fn tail(&self, elapsed: usize) -> f64 {
        self.tail[elapsed.min(self.max_sojourn)]
    }
}

/// The age-indexed semi-Markov kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    states: StateSpace,
    min_age: u32,
    max_age: u32,
    max_sojourn: u32,
    force_absorption: bool,
    base: Vec<f64>,
    calendar: Option<CalendarModifier>,
    explicit: BTreeMap<(usize, u32, i64), Vec<f64>>,
    base_mass: Vec<f64>,
    explicit_mass: BTreeMap<(usize, u32, i64), f64>,
}

impl Kernel {
    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn death(&self) -> usize {
        self.states.death()
    }

    pub fn min_age(&self) -> u32 {
        self.min_age
    }

    /// The maximum age ω by which death is certain.
    pub fn max_age(&self) -> u32 {
        self.max_age
    }

    pub fn max_sojourn(&self) -> u32 {
        self.max_sojourn
    }

    pub fn force_absorption(&self) -> bool {
        self.force_absorption
    }

    pub fn calendar_modifier(&self) -> Option<&CalendarModifier> {
        self.calendar.as_ref()
    }

    fn row_width(&self) -> usize {
        self.states.len() * self.max_sojourn as usize
    }

    fn ages(&self) -> usize {
        (self.max_age - self.min_age + 1) as usize
    }

    fn base_offset(&self, from: usize, age: u32) -> usize {
        (from * self.ages() + (age - self.min_age) as usize) * self.row_width()
    }

    /// Stored base increments of row `(from, age)`, before any modifier.
    pub fn base_row(&self, from: usize, age: u32) -> &[f64] {
        let off = self.base_offset(from, age);
        &self.base[off..off + self.row_width()]
    }

    /// Stored base increment mass of row `(from, age)`.
    pub fn base_mass(&self, from: usize, age: u32) -> f64 {
        self.base_mass[from * self.ages() + (age - self.min_age) as usize]
    }

    /// Explicit calendar-specific rows keyed by `(from, age, time)`.
    pub fn explicit_rows(&self) -> impl Iterator<Item = (&(usize, u32, i64), &[f64])> {
        self.explicit.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Last admissible sojourn for an entry at `age`; zero when none.
    pub fn final_sojourn(&self, age: u32) -> u32 {
        self.max_sojourn.min(self.max_age.saturating_sub(age))
    }

    pub fn check_age(&self, age: i64) -> Result<u32> {
        if age < self.min_age as i64 || age > self.max_age as i64 {
            Err(ModelError::AgeOutOfRange {
                age,
                min: self.min_age,
                max: self.max_age,
            })
        } else {
            Ok(age as u32)
        }
    }

    /// Row for a sojourn in `from` entered at age `age` and calendar time `time`.
    pub fn row(&self, from: usize, age: i64, time: i64) -> Result<RowRef<'_>> {
        self.states.check(from)?;
        let age = self.check_age(age)?;
        let death = self.death();
        let max_sojourn = self.max_sojourn as usize;
        if from == death {
            return Ok(RowRef {
                values: &[],
                scale: 0.0,
                max_sojourn,
                death,
                final_sojourn: 0,
                topup: 0.0,
            });
        }
        let (values, scale, mass) = match self.explicit.get(&(from, age, time)) {
            Some(v) => (v.as_slice(), 1.0, self.explicit_mass[&(from, age, time)]),
            None => {
                let scale = self.calendar.as_ref().map_or(1.0, |c| c.factor(time));
                (self.base_row(from, age), scale, self.base_mass(from, age) * scale)
            }
        };
        let final_sojourn = self.final_sojourn(age) as usize;
        // Rounding-level residuals are not topped up: a spurious 1e-16 on the
        // last increment would dominate the far tail of H̄.
        let topup = if self.force_absorption && final_sojourn > 0 && 1.0 - mass > MASS_TOLERANCE {
            1.0 - mass
        } else {
            0.0
        };
        Ok(RowRef {
            values,
            scale,
            max_sojourn,
            death,
            final_sojourn,
            topup,
        })
    }

    /// The increment `q(from, to, age, time, sojourn)`.
    pub fn increment(
        &self,
        from: usize,
        to: usize,
        age: i64,
        time: i64,
        sojourn: u32,
    ) -> Result<f64> {
        self.states.check(to)?;
        Ok(self.row(from, age, time)?.q(to, sojourn as usize))
    }

    pub(crate) fn dense_row(&self, from: usize, age: i64, time: i64) -> Result<DenseRow> {
        let row = self.row(from, age, time)?;
        let m = self.max_sojourn as usize;
        let n = self.states.len();
        if from == self.death() {
            return Ok(DenseRow {
                q: vec![0.0; n * m],
                tail: vec![1.0; m + 1],
                max_sojourn: m,
            });
        }
        let mut q = vec![0.0; n * m];
        for to in 0..n {
            for d in 1..=m {
                q[to * m + d - 1] = row.q(to, d);
            }
        }
        let mut tail = vec![0.0; m + 1];
        let total: f64 = q.iter().sum();
        let residual = 1.0 - total;
        tail[m] = if residual > MASS_TOLERANCE { residual } else { 0.0 };
        for d in (0..m).rev() {
            let step: f64 = (0..n).map(|to| q[to * m + d]).sum();
            tail[d] = (tail[d + 1] + step).min(1.0);
        }
        Ok(DenseRow {
            q,
            tail,
            max_sojourn: m,
        })
    }

    /// Checks that a scenario lies in the kernel's domain.
    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        self.states.check(scenario.state)?;
        if scenario.backward > scenario.age {
            return Err(ModelError::BackwardExceedsAge {
                backward: scenario.backward,
                age: scenario.age,
            });
        }
        if !self.states.is_death(scenario.state) && scenario.backward > self.max_sojourn {
            return Err(ModelError::BackwardTooLong {
                backward: scenario.backward,
                max_sojourn: self.max_sojourn,
            });
        }
        self.check_age(scenario.age as i64)?;
        if !self.states.is_death(scenario.state) {
            self.check_age(scenario.entry_age() as i64)?;
        }
        Ok(())
    }
}

/// Incremental construction of a [`Kernel`].
#[derive(Debug, Clone)]
pub struct KernelBuilder {
    states: StateSpace,
    min_age: u32,
    max_age: u32,
    max_sojourn: u32,
    force_absorption: bool,
    base: Vec<f64>,
    calendar: Option<CalendarModifier>,
    explicit: BTreeMap<(usize, u32, i64), Vec<f64>>,
}

impl KernelBuilder {
    pub fn new(states: StateSpace, min_age: u32, max_age: u32, max_sojourn: u32) -> Result<Self> {
        if min_age >= max_age {
            return Err(ModelError::InvalidInput(format!(
                "min_age {min_age} must be below max_age {max_age}"
            )));
        }
        if max_sojourn == 0 {
            return Err(ModelError::InvalidInput("max_sojourn must be at least 1".into()));
        }
        let len = states.len() * (max_age - min_age + 1) as usize * states.len() * max_sojourn as usize;
        Ok(Self {
            states,
            min_age,
            max_age,
            max_sojourn,
            force_absorption: false,
            base: vec![0.0; len],
            calendar: None,
            explicit: BTreeMap::new(),
        })
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn force_absorption(mut self, on: bool) -> Self {
        self.force_absorption = on;
        self
    }

    pub fn calendar_modifier(mut self, modifier: CalendarModifier) -> Self {
        self.calendar = Some(modifier);
        self
    }

    fn check_cell(&self, from: usize, to: usize, age: u32, sojourn: u32, p: f64) -> Result<()> {
        self.states.check(from)?;
        self.states.check(to)?;
        if age < self.min_age || age > self.max_age {
            return Err(ModelError::AgeOutOfRange {
                age: age as i64,
                min: self.min_age,
                max: self.max_age,
            });
        }
        if sojourn == 0 || sojourn > self.max_sojourn {
            return Err(ModelError::InvalidInput(format!(
                "sojourn {sojourn} outside 1..={}",
                self.max_sojourn
            )));
        }
        if !p.is_finite() {
            return Err(ModelError::InvalidInput(format!("probability {p} is not finite")));
        }
        Ok(())
    }

    fn index(&self, from: usize, to: usize, age: u32, sojourn: u32) -> usize {
        let n = self.states.len();
        let m = self.max_sojourn as usize;
        let ages = (self.max_age - self.min_age + 1) as usize;
        ((from * ages + (age - self.min_age) as usize) * n + to) * m + sojourn as usize - 1
    }

    /// Sets a time-homogeneous base increment.
    pub fn set(&mut self, from: usize, to: usize, age: u32, sojourn: u32, p: f64) -> Result<&mut Self> {
        self.check_cell(from, to, age, sojourn, p)?;
        let k = self.index(from, to, age, sojourn);
        self.base[k] = p;
        Ok(self)
    }

    pub fn get(&self, from: usize, to: usize, age: u32, sojourn: u32) -> f64 {
        self.base[self.index(from, to, age, sojourn)]
    }

    /// Sets an increment in the explicit row for entry time `time`.
    pub fn set_at_time(
        &mut self,
        from: usize,
        to: usize,
        age: u32,
        time: i64,
        sojourn: u32,
        p: f64,
    ) -> Result<&mut Self> {
        self.check_cell(from, to, age, sojourn, p)?;
        let width = self.states.len() * self.max_sojourn as usize;
        let row = self
            .explicit
            .entry((from, age, time))
            .or_insert_with(|| vec![0.0; width]);
        row[to * self.max_sojourn as usize + sojourn as usize - 1] = p;
        Ok(self)
    }

    /// Builds without validation.
    pub fn build_unchecked(self) -> Kernel {
        let n = self.states.len();
        let ages = (self.max_age - self.min_age + 1) as usize;
        let width = n * self.max_sojourn as usize;
        let base_mass = (0..n * ages)
            .map(|r| self.base[r * width..(r + 1) * width].iter().sum())
            .collect();
        let explicit_mass = self
            .explicit
            .iter()
            .map(|(k, v)| (*k, v.iter().sum()))
            .collect();
        Kernel {
            states: self.states,
            min_age: self.min_age,
            max_age: self.max_age,
            max_sojourn: self.max_sojourn,
            force_absorption: self.force_absorption,
            base: self.base,
            calendar: self.calendar,
            explicit: self.explicit,
            base_mass,
            explicit_mass,
        }
    }

    /// Builds and validates; fails with the full report if any rule is violated.
    pub fn build(self) -> std::result::Result<Kernel, crate::io::ValidationReport> {
        let kernel = self.build_unchecked();
        let report = crate::io::validate_kernel(&kernel);
        if report.is_valid() {
            Ok(kernel)
        } else {
            Err(report)
        }
    }
}

use std::fmt;

use crate::format::g17;
use crate::smk::{Kernel, MASS_TOLERANCE};

/// One broken kernel rule. `time` is `None` for calendar-independent rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ProbabilityOutOfRange {
        from: usize,
        to: usize,
        age: u32,
        time: Option<i64>,
        sojourn: u32,
        value: f64,
    },
    DeathNotAbsorbing {
        to: usize,
        age: u32,
        time: Option<i64>,
        sojourn: u32,
        value: f64,
    },
    /// A transition that would land past the maximum age (or at it, for a
    /// living target).
    BeyondMaxAge {
        from: usize,
        to: usize,
        age: u32,
        time: Option<i64>,
        sojourn: u32,
        value: f64,
    },
    RowMassExceeded {
        from: usize,
        age: u32,
        time: Option<i64>,
        mass: f64,
    },
    /// Survivor mass left at the maximum age without forced absorption.
    ResidualMass {
        from: usize,
        age: u32,
        time: Option<i64>,
        residual: f64,
    },
}

/// Mass added on the final death increment by forced absorption.
#[derive(Debug, Clone, PartialEq)]
pub struct TopUp {
    pub state: usize,
    pub age: u32,
    pub time: Option<i64>,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub labels: Vec<String>,
    pub death: usize,
    pub violations: Vec<Violation>,
    pub top_ups: Vec<TopUp>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// One line per violation.
    pub fn violation_lines(&self) -> Vec<String> {
        self.violations.iter().map(|v| self.describe(v)).collect()
    }

    fn label(&self, s: usize) -> &str {
        self.labels.get(s).map_or("?", String::as_str)
    }

    fn describe(&self, v: &Violation) -> String {
        let time = |t: &Option<i64>| t.map_or_else(|| "*".to_string(), |t| t.to_string());
        match v {
            Violation::ProbabilityOutOfRange { from, to, age, time: t, sojourn, value } => format!(
                "probability-out-of-range: {} -> {} age {age} time {} sojourn {sojourn} value {}",
                self.label(*from),
                self.label(*to),
                time(t),
                g17(*value)
            ),
            Violation::DeathNotAbsorbing { to, age, time: t, sojourn, value } => format!(
                "death-not-absorbing: {} -> {} age {age} time {} sojourn {sojourn} value {}",
                self.label(self.death),
                self.label(*to),
                time(t),
                g17(*value)
            ),
            Violation::BeyondMaxAge { from, to, age, time: t, sojourn, value } => format!(
                "beyond-max-age: {} -> {} age {age} time {} sojourn {sojourn} value {}",
                self.label(*from),
                self.label(*to),
                time(t),
                g17(*value)
            ),
            Violation::RowMassExceeded { from, age, time: t, mass } => format!(
                "row-mass-exceeded: state {} age {age} time {} mass {}",
                self.label(*from),
                time(t),
                g17(*mass)
            ),
            Violation::ResidualMass { from, age, time: t, residual } => format!(
                "residual-mass: state {} age {age} time {} residual {}",
                self.label(*from),
                time(t),
                g17(*residual)
            ),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "kernel is valid ({} forced-absorption top-ups)", self.top_ups.len());
        }
        let lines = self.violation_lines();
        write!(f, "{}", lines.join("\n"))
    }
}

struct RowCheck<'a> {
    from: usize,
    age: u32,
    time: Option<i64>,
    values: &'a [f64],
    scale: f64,
}

/// Checks every rule a kernel must satisfy and records forced-absorption
/// top-ups.
///
/// Living rows are checked for every entry age below the maximum age. With
/// a calendar modifier, each distinct factor position is checked; explicit
/// rows are checked as stored.
pub fn validate_kernel(kernel: &Kernel) -> ValidationReport {
    let states = kernel.states();
    let mut report = ValidationReport {
        labels: states.labels().to_vec(),
        death: states.death(),
        violations: Vec::new(),
        top_ups: Vec::new(),
    };
    let death = states.death();

    let mut rows = Vec::new();
    for from in 0..states.len() {
        for age in kernel.min_age()..=kernel.max_age() {
            let values = kernel.base_row(from, age);
            match kernel.calendar_modifier() {
                Some(c) if from != death => {
                    for (k, factor) in c.factors().iter().enumerate() {
                        rows.push(RowCheck {
                            from,
                            age,
                            time: Some(c.start() + k as i64),
                            values,
                            scale: *factor,
                        });
                    }
                }
                _ => rows.push(RowCheck {
                    from,
                    age,
                    time: None,
                    values,
                    scale: 1.0,
                }),
            }
        }
    }
    for (&(from, age, time), values) in kernel.explicit_rows() {
        rows.push(RowCheck {
            from,
            age,
            time: Some(time),
            values,
            scale: 1.0,
        });
    }

    for row in &rows {
        check_row(kernel, row, &mut report);
    }
    report
}

fn check_row(kernel: &Kernel, row: &RowCheck<'_>, report: &mut ValidationReport) {
    let n = kernel.states().len();
    let m = kernel.max_sojourn() as usize;
    let death = kernel.death();
    let omega = kernel.max_age();
    let mut mass = 0.0;
    for to in 0..n {
        for d in 1..=m {
            let value = row.values[to * m + d - 1] * row.scale;
            if value == 0.0 {
                continue;
            }
            let sojourn = d as u32;
            if !(0.0..=1.0).contains(&value) {
                report.violations.push(Violation::ProbabilityOutOfRange {
                    from: row.from,
                    to,
                    age: row.age,
                    time: row.time,
                    sojourn,
                    value,
                });
            }
            if row.from == death {
                report.violations.push(Violation::DeathNotAbsorbing {
                    to,
                    age: row.age,
                    time: row.time,
                    sojourn,
                    value,
                });
                continue;
            }
            let end = row.age + sojourn;
            if end > omega || (to != death && end == omega) {
                report.violations.push(Violation::BeyondMaxAge {
                    from: row.from,
                    to,
                    age: row.age,
                    time: row.time,
                    sojourn,
                    value,
                });
            }
            mass += value;
        }
    }
    if row.from == death || row.age >= omega {
        return;
    }
    if mass > 1.0 + MASS_TOLERANCE {
        report.violations.push(Violation::RowMassExceeded {
            from: row.from,
            age: row.age,
            time: row.time,
            mass,
        });
        return;
    }
    let residual = 1.0 - mass;
    if residual > MASS_TOLERANCE {
        if kernel.force_absorption() {
            report.top_ups.push(TopUp {
                state: row.from,
                age: row.age,
                time: row.time,
                amount: residual,
            });
        } else {
            report.violations.push(Violation::ResidualMass {
                from: row.from,
                age: row.age,
                time: row.time,
                residual,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::geometric_kernel;
    use crate::smk::{CalendarModifier, KernelBuilder, StateSpace};

    fn two_state() -> StateSpace {
        StateSpace::new(vec!["H", "D"], "D").unwrap()
    }

    #[test]
    fn geometric_kernel_is_valid() {
        let report = validate_kernel(&geometric_kernel(0.2, 40, 140).unwrap());
        assert!(report.is_valid(), "{report}");
        assert!(!report.top_ups.is_empty());
    }

    #[test]
    fn excess_row_mass_names_the_row() {
        let mut b = KernelBuilder::new(two_state(), 40, 45, 5).unwrap();
        b.set(0, 1, 42, 1, 0.6).unwrap().set(0, 1, 42, 2, 0.45).unwrap();
        let report = validate_kernel(&b.force_absorption(true).build_unchecked());
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::RowMassExceeded { from: 0, age: 42, time: None, mass } if (*mass - 1.05).abs() < 1e-12
        )));
        assert!(report.violation_lines()[0].contains("row-mass-exceeded: state H age 42"));
    }

    #[test]
    fn residual_without_forced_absorption() {
        let mut b = KernelBuilder::new(two_state(), 40, 42, 2).unwrap();
        b.set(0, 1, 40, 1, 0.5).unwrap().set(0, 1, 40, 2, 0.5).unwrap();
        b.set(0, 1, 41, 1, 0.9).unwrap();
        let report = validate_kernel(&b.build_unchecked());
        assert_eq!(
            report.violations,
            vec![Violation::ResidualMass {
                from: 0,
                age: 41,
                time: None,
                residual: 1.0 - 0.9
            }]
        );
    }

    #[test]
    fn death_row_and_late_transitions() {
        let states = StateSpace::new(vec!["H", "I", "D"], "D").unwrap();
        let mut b = KernelBuilder::new(states, 40, 43, 3).unwrap();
        b.set(2, 0, 40, 1, 0.1).unwrap();
        b.set(0, 1, 41, 2, 0.1).unwrap();
        b.set(0, 2, 41, 2, 0.1).unwrap();
        b.set(0, 2, 42, 2, 0.1).unwrap();
        let report = validate_kernel(&b.force_absorption(true).build_unchecked());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DeathNotAbsorbing { to: 0, age: 40, .. })));
        let late: Vec<_> = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::BeyondMaxAge { .. }))
            .collect();
        assert_eq!(late.len(), 2, "{report}");
    }

    #[test]
    fn calendar_factors_are_checked_per_time() {
        let mut b = KernelBuilder::new(two_state(), 40, 42, 2).unwrap();
        b.set(0, 1, 40, 1, 0.8).unwrap();
        let b = b
            .force_absorption(true)
            .calendar_modifier(CalendarModifier::new(3, vec![1.0, 1.5]).unwrap());
        let report = validate_kernel(&b.build_unchecked());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RowMassExceeded { age: 40, time: Some(4), .. })));
        assert!(report.violations.iter().all(|v| matches!(
            v,
            Violation::RowMassExceeded { time: Some(4), .. }
                | Violation::ProbabilityOutOfRange { time: Some(4), .. }
        )));
    }
}

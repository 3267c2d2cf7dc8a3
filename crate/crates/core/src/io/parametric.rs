//! Kernels from per-transition sojourn hazards.
//!
//! Each transition `i → j` carries a hazard `λ_ij(d)`: the probability of
//! leaving to `j` after `d` periods given the sojourn lasted `d − 1`. The
//! age multiplier scales every hazard of a row by entry age, and the row's
//! increments follow as `q_ij(d) = λ_ij(d)·m(a) · Π_{e<d} (1 − Σ_k λ_ik(e)·m(a))`.
//! Transitions into living states that would end at or past the maximum age
//! are dropped; forced absorption routes the remaining mass to death.

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::error::ModelError;
use crate::smk::{CalendarModifier, Kernel, KernelBuilder, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SojournFamily {
    /// Constant hazard `p`.
    Geometric { p: f64 },
    /// `λ(d) = 1 − (1 − p)^(d^β − (d−1)^β)`; `shape = 1` is geometric.
    DiscreteWeibull { p: f64, shape: f64 },
}

impl SojournFamily {
    pub fn hazard(&self, d: u32) -> f64 {
        match *self {
            Self::Geometric { p } => p,
            Self::DiscreteWeibull { p, shape } => {
                let d = d as f64;
                1.0 - (1.0 - p).powf(d.powf(shape) - (d - 1.0).powf(shape))
            }
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        let (p, shape) = match *self {
            Self::Geometric { p } => (p, 1.0),
            Self::DiscreteWeibull { p, shape } => (p, shape),
        };
        if !(0.0..=1.0).contains(&p) || !(shape.is_finite() && shape > 0.0) {
            return Err(ModelError::InvalidInput(format!(
                "sojourn family parameters p = {p}, shape = {shape} out of range"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: String,
    pub to: String,
    pub family: SojournFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarSpec {
    pub start: i64,
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricSpec {
    pub states: Vec<String>,
    pub death: String,
    pub min_age: u32,
    pub max_age: u32,
    pub max_sojourn: u32,
    pub transitions: Vec<TransitionSpec>,
    /// Hazard multiplier by entry age, indexed from `min_age`; the last value
    /// extends to older ages. Empty means no age effect.
    #[serde(default)]
    pub age_multiplier: Vec<f64>,
    /// Multiplies every increment by calendar entry time.
    #[serde(default)]
    pub calendar_multiplier: Option<CalendarSpec>,
}

impl ParametricSpec {
    fn age_factor(&self, age: u32) -> f64 {
        let k = (age - self.min_age) as usize;
        match self.age_multiplier.get(k).or(self.age_multiplier.last()) {
            Some(m) => *m,
            None => 1.0,
        }
    }
}

pub fn build_parametric_kernel(spec: &ParametricSpec) -> Result<Kernel, IoError> {
    let states = StateSpace::new(spec.states.clone(), &spec.death)?;
    let death = states.death();
    let n = states.len();
    let mut hazards: Vec<Vec<Option<SojournFamily>>> = vec![vec![None; n]; n];
    for t in &spec.transitions {
        let from = states.index_of(&t.from)?;
        let to = states.index_of(&t.to)?;
        if from == death {
            return Err(ModelError::InvalidInput("transitions out of the death state".into()).into());
        }
        if from == to {
            return Err(ModelError::InvalidInput(format!("self-transition on `{}`", t.from)).into());
        }
        if hazards[from][to].is_some() {
            return Err(ModelError::InvalidInput(format!(
                "transition {} -> {} given twice",
                t.from, t.to
            ))
            .into());
        }
        t.family.check()?;
        hazards[from][to] = Some(t.family);
    }
    if let Some(bad) = spec.age_multiplier.iter().find(|m| !m.is_finite() || **m < 0.0) {
        return Err(ModelError::InvalidInput(format!("age multiplier {bad} is negative")).into());
    }

    let mut builder = KernelBuilder::new(states, spec.min_age, spec.max_age, spec.max_sojourn)?
        .force_absorption(true);
    if let Some(c) = &spec.calendar_multiplier {
        builder = builder.calendar_modifier(CalendarModifier::new(c.start, c.factors.clone())?);
    }

    for from in (0..n).filter(|&i| i != death) {
        for age in spec.min_age..spec.max_age {
            let m = spec.age_factor(age);
            let last = spec.max_sojourn.min(spec.max_age - age);
            let mut surv = 1.0;
            for d in 1..=last {
                let open = |to: usize| to == death || age + d < spec.max_age;
                let mut total = 0.0;
                for to in (0..n).filter(|&to| open(to)) {
                    if let Some(f) = hazards[from][to] {
                        total += f.hazard(d) * m;
                    }
                }
                if total > 1.0 + 1e-12 {
                    return Err(ModelError::InvalidInput(format!(
                        "combined hazard {total} exceeds one for state {} at age {age}, sojourn {d}",
                        spec.states[from]
                    ))
                    .into());
                }
                for to in (0..n).filter(|&to| open(to)) {
                    if let Some(f) = hazards[from][to] {
                        builder.set(from, to, age, d, f.hazard(d) * m * surv)?;
                    }
                }
                surv *= 1.0 - total.min(1.0);
            }
        }
    }
    builder.build().map_err(IoError::Invalid)
}

/// Two-state `H → D` kernel with a constant one-period death probability
/// `q` at every age and duration.
pub fn geometric_kernel(q: f64, min_age: u32, max_age: u32) -> Result<Kernel, IoError> {
    if max_age <= min_age {
        return Err(ModelError::InvalidInput(format!(
            "min_age {min_age} must be below max_age {max_age}"
        ))
        .into());
    }
    build_parametric_kernel(&ParametricSpec {
        states: vec!["H".into(), "D".into()],
        death: "D".into(),
        min_age,
        max_age,
        max_sojourn: max_age - min_age,
        transitions: vec![TransitionSpec {
            from: "H".into(),
            to: "D".into(),
            family: SojournFamily::Geometric { p: q },
        }],
        age_multiplier: Vec::new(),
        calendar_multiplier: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smk::waiting_time_cdf;

    #[test]
    fn geometric_increments() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        assert_eq!(k.increment(0, 1, 40, 0, 1).unwrap(), 0.2);
        assert!((k.increment(0, 1, 70, 5, 3).unwrap() - 0.2 * 0.64).abs() < 1e-15);
        // forced absorption on the last year of life
        assert!((k.increment(0, 1, 130, 0, 10).unwrap() - 0.8f64.powi(9)).abs() < 1e-12);
        assert_eq!(k.increment(0, 1, 130, 0, 11).unwrap(), 0.0);
    }

    fn weibull_spec(shape: f64) -> ParametricSpec {
        ParametricSpec {
            states: vec!["H".into(), "D".into()],
            death: "D".into(),
            min_age: 40,
            max_age: 80,
            max_sojourn: 20,
            transitions: vec![TransitionSpec {
                from: "H".into(),
                to: "D".into(),
                family: SojournFamily::DiscreteWeibull { p: 0.1, shape },
            }],
            age_multiplier: Vec::new(),
            calendar_multiplier: None,
        }
    }

    #[test]
    fn weibull_shape_one_is_geometric() {
        let f = SojournFamily::DiscreteWeibull { p: 0.1, shape: 1.0 };
        for d in 1..10 {
            assert!((f.hazard(d) - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn weibull_hazard_depends_on_duration() {
        let k = build_parametric_kernel(&weibull_spec(1.5)).unwrap();
        let hazard = |d: i64| {
            let before = 1.0 - waiting_time_cdf(&k, 0, 1, 50, 0, d - 1).unwrap();
            let after = 1.0 - waiting_time_cdf(&k, 0, 1, 50, 0, d).unwrap();
            1.0 - after / before
        };
        assert!((hazard(1) - 0.1).abs() < 1e-12);
        assert!(hazard(3) > hazard(1) + 0.05);
    }

    #[test]
    fn age_multiplier_scales_first_increment() {
        let mut spec = weibull_spec(1.0);
        let mut mult = vec![1.0; 40];
        mult.push(2.0);
        spec.max_age = 100;
        spec.age_multiplier = mult;
        let k = build_parametric_kernel(&spec).unwrap();
        let base = k.increment(0, 1, 79, 0, 1).unwrap();
        assert!((base - 0.1).abs() < 1e-15);
        assert_eq!(k.increment(0, 1, 80, 0, 1).unwrap(), 2.0 * base);
    }

    #[test]
    fn excessive_hazard_is_rejected() {
        let mut spec = weibull_spec(1.0);
        spec.age_multiplier = vec![11.0];
        assert!(build_parametric_kernel(&spec).is_err());
    }
}

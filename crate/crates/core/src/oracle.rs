//! Monte Carlo simulation of the age-indexed renewal process.
//!
//! Path `k` of a run with seed `s` draws from a ChaCha8 generator seeded
//! with `s` on stream `k`, so every path is reproducible on its own and
//! results do not depend on how paths are scheduled across threads. Sample
//! statistics are accumulated sequentially in path order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conversion::{cash_value, exercise_set, CashValueBasis, ConversionInputs};
use crate::error::{ModelError, Result};
use crate::smk::{prepare_origin, Kernel, RowRef, Scenario, MASS_TOLERANCE};

/// Stream offset for the auxiliary batch started in the unchanged n-scenario.
const AUX_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jump {
    pub state: usize,
    pub time: i64,
    pub age: i64,
}

/// One simulated path from `origin` up to `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub origin: Scenario,
    pub horizon: i64,
    pub jumps: Vec<Jump>,
    /// Time of entry into death, `None` when still alive at the horizon.
    pub death_time: Option<i64>,
}

impl Trajectory {
    /// `(Z(t), B(t))`: state and backward duration at time `t`.
    pub fn state_at(&self, t: i64) -> (usize, u32) {
        match self.jumps.iter().rev().find(|j| j.time <= t) {
            Some(j) => (j.state, (t - j.time) as u32),
            None => (
                self.origin.state,
                (t - self.origin.entry_time()) as u32,
            ),
        }
    }

    /// `N(t)`: number of transitions in `(s, t]`.
    pub fn jump_count(&self, t: i64) -> usize {
        self.jumps.iter().filter(|j| j.time <= t).count()
    }

    pub fn alive_at(&self, t: i64) -> bool {
        self.death_time.is_none_or(|d| d > t)
    }

    /// Checks increasing jump times, the age identity and absorption.
    pub fn check(&self, death: usize) -> Result<()> {
        let base_age = self.origin.base_age();
        let mut last = self.origin.time;
        for (k, j) in self.jumps.iter().enumerate() {
            if j.time <= last {
                return Err(ModelError::Invariant(format!("jump {k} at {} is not after {last}", j.time)));
            }
            if j.age != base_age + j.time {
                return Err(ModelError::Invariant(format!(
                    "jump {k}: age {} differs from {} + {}",
                    j.age, base_age, j.time
                )));
            }
            if j.state == death && k + 1 != self.jumps.len() {
                return Err(ModelError::Invariant(format!("jump {k} leaves the death state")));
            }
            last = j.time;
        }
        Ok(())
    }
}

/// Draws `(to, sojourn)` from a row's increments restricted to sojourns
/// beyond `elapsed`. `None` means the sojourn outlasts the maximum sojourn
/// (only possible for rows with unabsorbed residual mass).
fn draw_from_row(row: &RowRef<'_>, states: usize, elapsed: usize, rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
    let m = row.max_sojourn();
    let mut mass = 0.0;
    for d in elapsed + 1..=m {
        for to in 0..states {
            mass += row.q(to, d);
        }
    }
    let residual = (1.0 - row.total()).max(0.0);
    let residual = if residual > MASS_TOLERANCE { residual } else { 0.0 };
    let target = rng.random::<f64>() * (mass + residual);
    let mut acc = 0.0;
    let mut last = None;
    for d in elapsed + 1..=m {
        for to in 0..states {
            let q = row.q(to, d);
            if q == 0.0 {
                continue;
            }
            acc += q;
            last = Some((to, d));
            if target < acc {
                return last;
            }
        }
    }
    if target < mass {
        last
    } else if residual > 0.0 {
        None
    } else {
        last
    }
}

/// Simulates one path. A death-state origin yields no jumps and death at
/// the origin time.
pub fn sample_trajectory(
    kernel: &Kernel,
    origin: &Scenario,
    horizon: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let death = kernel.death();
    let n = kernel.states().len();
    let mut path = Trajectory {
        origin: *origin,
        horizon,
        jumps: Vec::new(),
        death_time: None,
    };
    if prepare_origin(kernel, origin, horizon)?.is_none() {
        path.death_time = Some(origin.time);
        return Ok(path);
    }
    let base_age = origin.base_age();
    let mut state = origin.state;
    let mut entry = origin.entry_time();
    let mut elapsed = origin.backward as usize;
    loop {
        let row = kernel.row(state, base_age + entry, entry)?;
        let Some((to, d)) = draw_from_row(&row, n, elapsed, rng) else {
            return Ok(path);
        };
        let time = entry + d as i64;
        if time > horizon {
            return Ok(path);
        }
        path.jumps.push(Jump {
            state: to,
            time,
            age: base_age + time,
        });
        if to == death {
            path.death_time = Some(time);
            return Ok(path);
        }
        state = to;
        entry = time;
        elapsed = 0;
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `n_paths` paths in parallel, in path order.
pub fn sample_paths(
    kernel: &Kernel,
    origin: &Scenario,
    horizon: i64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    sample_batch(kernel, origin, horizon, n_paths, seed, 0)
}

fn sample_batch(
    kernel: &Kernel,
    origin: &Scenario,
    horizon: i64,
    n_paths: u64,
    seed: u64,
    stream_offset: u64,
) -> Result<Vec<Trajectory>> {
    (0..n_paths)
        .into_par_iter()
        .map(|k| sample_trajectory(kernel, origin, horizon, &mut path_rng(seed, stream_offset + k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: u64,
    pub seed: u64,
}

impl EstimatorResult {
    /// Frequency estimate with binomial standard error.
    pub fn from_count(count: u64, n_paths: u64, seed: u64) -> Self {
        let n = n_paths as f64;
        let p = count as f64 / n;
        Self {
            mean: p,
            std_error: (p * (1.0 - p) / n).max(0.0).sqrt(),
            n_paths,
            seed,
        }
    }

    /// Sample mean with standard error `sd / √n`, accumulated in order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (k, x) in samples.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (x - mean);
        }
        let n = samples.len() as f64;
        let var = if samples.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
        Self {
            mean,
            std_error: (var.max(0.0) / n).sqrt(),
            n_paths: samples.len() as u64,
            seed,
        }
    }

    /// `(analytic − mean) / SE`; zero for exact agreement and infinite when
    /// a zero-variance estimate disagrees.
    pub fn z_score(&self, analytic: f64) -> f64 {
        let diff = analytic - self.mean;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }

    /// `|analytic − mean| ≤ k·SE`, with a 1e-12 floor for zero-variance cases.
    pub fn agrees(&self, analytic: f64, k: f64) -> bool {
        (analytic - self.mean).abs() <= k * self.std_error + 1e-12
    }
}

/// Empirical `φ` with one entry per visited `(j, u′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub n_paths: u64,
    pub seed: u64,
    pub counts: BTreeMap<(usize, u32), u64>,
}

impl PhiEstimate {
    pub fn get(&self, state: usize, backward: u32) -> EstimatorResult {
        let count = self.counts.get(&(state, backward)).copied().unwrap_or(0);
        EstimatorResult::from_count(count, self.n_paths, self.seed)
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, u32), EstimatorResult)> + '_ {
        self.counts
            .keys()
            .map(|&(j, u)| ((j, u), self.get(j, u)))
    }
}

pub fn estimate_phi(kernel: &Kernel, origin: &Scenario, t: i64, n_paths: u64, seed: u64) -> Result<PhiEstimate> {
    check_paths(n_paths)?;
    let paths = sample_paths(kernel, origin, t, n_paths, seed)?;
    let mut counts = BTreeMap::new();
    for p in &paths {
        *counts.entry(p.state_at(t)).or_insert(0) += 1;
    }
    Ok(PhiEstimate { n_paths, seed, counts })
}

/// Empirical survival at every `t ∈ s..=horizon`.
pub fn estimate_survival(
    kernel: &Kernel,
    origin: &Scenario,
    horizon: i64,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<EstimatorResult>> {
    check_paths(n_paths)?;
    let paths = sample_paths(kernel, origin, horizon, n_paths, seed)?;
    let mut alive = vec![0u64; (horizon - origin.time + 1) as usize];
    for p in &paths {
        let end = p.death_time.map_or(horizon + 1, |d| d);
        for t in origin.time..end.min(horizon + 1) {
            alive[(t - origin.time) as usize] += 1;
        }
    }
    Ok(alive
        .into_iter()
        .map(|c| EstimatorResult::from_count(c, n_paths, seed))
        .collect())
}

/// Monte Carlo counterparts of the analytic contract and conversion values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractEstimates {
    pub assurance: EstimatorResult,
    pub annuity: EstimatorResult,
    pub premium_value: EstimatorResult,
    pub cash_value: EstimatorResult,
    pub pvp_conversion: EstimatorResult,
    pub pvp_no_conversion: EstimatorResult,
    pub vco: EstimatorResult,
}

impl ContractEstimates {
    /// `(name, estimate)` in a fixed order.
    pub fn named(&self) -> [(&'static str, &EstimatorResult); 7] {
        [
            ("assurance", &self.assurance),
            ("annuity", &self.annuity),
            ("premium_value", &self.premium_value),
            ("expected_cash_value", &self.cash_value),
            ("pvp_conversion", &self.pvp_conversion),
            ("pvp_no_conversion", &self.pvp_no_conversion),
            ("vco", &self.vco),
        ]
    }
}

fn check_paths(n_paths: u64) -> Result<()> {
    if n_paths == 0 {
        Err(ModelError::InvalidInput("at least one path is required".into()))
    } else {
        Ok(())
    }
}

/// Per-path values of the TIP and of both conversion strategies.
///
/// Premium rates and the exercise set come from the analytic pipeline; the
/// death times, survivorship and n-scenarios are simulated. The cash value
/// of path `k` is drawn from path `k` of an independent batch started in
/// the unchanged n-scenario.
pub fn estimate_contract_values(inputs: &ConversionInputs<'_>, n_paths: u64, seed: u64) -> Result<ContractEstimates> {
    check_paths(n_paths)?;
    let kernel = inputs.kernel();
    let origin = *inputs.origin();
    let disc = inputs.discount();
    let s0 = origin.time;
    let conversion = inputs.conversion_time();
    let omega_time = s0 + (kernel.max_age() - origin.age) as i64;

    let tip = inputs.tip_quote()?;
    let set = exercise_set(inputs)?;
    let unchanged = inputs.unchanged_scenario();
    let cash_parts = cash_value(inputs)?;
    let gap = cash_parts.unchanged_pip.premium - cash_parts.conversion_tip.premium;

    let tip_offsets = inputs.timing().offsets(inputs.term());
    let pip_offsets = inputs.timing().offsets(kernel.max_age() - unchanged.age);

    let main = sample_batch(kernel, &origin, omega_time, n_paths, seed, 0)?;
    let aux = sample_batch(kernel, &unchanged, omega_time, n_paths, seed, AUX_STREAM)?;

    let stream_after = |p: &Trajectory| -> f64 {
        pip_offsets
            .clone()
            .filter(|r| p.alive_at(conversion + r))
            .map(|r| disc.between(s0, conversion + r))
            .sum()
    };

    let len = n_paths as usize;
    let mut assurance = Vec::with_capacity(len);
    let mut annuity = Vec::with_capacity(len);
    let mut premium_value = Vec::with_capacity(len);
    let mut cash = Vec::with_capacity(len);
    let mut pvp_c = Vec::with_capacity(len);
    let mut pvp_nc = Vec::with_capacity(len);
    let mut vco = Vec::with_capacity(len);

    for (p, q) in main.iter().zip(&aux) {
        let death_benefit = match p.death_time {
            Some(t) if t <= conversion => disc.between(s0, t),
            _ => 0.0,
        };
        let tip_annuity: f64 = tip_offsets
            .clone()
            .filter(|r| p.alive_at(s0 + r))
            .map(|r| disc.between(s0, s0 + r))
            .sum();
        let cash_value = gap
            * match inputs.cash_basis() {
                CashValueBasis::DeathBenefit => q.death_time.map_or(0.0, |t| disc.between(s0, t)),
                CashValueBasis::PremiumAnnuity => stream_after(q),
            };
        let tip_premiums = tip.premium * tip_annuity;
        let (nc, c) = if p.alive_at(conversion) {
            let (j, u) = p.state_at(conversion);
            let entry = set.entry(j, u).ok_or_else(|| {
                ModelError::Invariant(format!("simulated n-scenario ({j}, {u}) has no analytic mass"))
            })?;
            let after = stream_after(p);
            let new_pip = entry.pip_premium * after;
            let converted = if entry.member {
                tip.premium * after + cash_value
            } else {
                new_pip
            };
            (tip_premiums + new_pip, tip_premiums + converted)
        } else {
            (tip_premiums, tip_premiums)
        };
        assurance.push(death_benefit);
        annuity.push(tip_annuity);
        premium_value.push(tip_premiums);
        cash.push(cash_value);
        pvp_nc.push(nc);
        pvp_c.push(c);
        vco.push(nc - c);
    }

    Ok(ContractEstimates {
        assurance: EstimatorResult::from_samples(&assurance, seed),
        annuity: EstimatorResult::from_samples(&annuity, seed),
        premium_value: EstimatorResult::from_samples(&premium_value, seed),
        cash_value: EstimatorResult::from_samples(&cash, seed),
        pvp_conversion: EstimatorResult::from_samples(&pvp_c, seed),
        pvp_no_conversion: EstimatorResult::from_samples(&pvp_nc, seed),
        vco: EstimatorResult::from_samples(&vco, seed),
    })
}

/// One analytic value next to its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub quantity: String,
    pub analytic: f64,
    pub estimate: EstimatorResult,
}

impl Agreement {
    pub fn z_score(&self) -> f64 {
        self.estimate.z_score(self.analytic)
    }

    pub fn agrees(&self, k: f64) -> bool {
        self.estimate.agrees(self.analytic, k)
    }
}

/// Compares every analytic quantity of a conversion valuation with its
/// estimate: `φ` cells at the conversion time and survival probabilities
/// with analytic mass at least `min_mass`, then the contract values.
///
/// Quantities are named `phi[j;u′]`, `survival[t]`, `assurance`, `annuity`,
/// `premium_value`, `expected_cash_value`, `pvp_conversion`,
/// `pvp_no_conversion` and `vco`.
pub fn agreement_report(
    inputs: &ConversionInputs<'_>,
    n_paths: u64,
    seed: u64,
    min_mass: f64,
) -> Result<Vec<Agreement>> {
    let kernel = inputs.kernel();
    let origin = inputs.origin();
    let states = kernel.states();
    let mut rows = Vec::new();

    let n = inputs.conversion_time();
    let phi = inputs.conversion_phi()?;
    let phi_est = estimate_phi(kernel, origin, n, n_paths, seed)?;
    for (j, u, p) in phi.support().filter(|c| c.2 >= min_mass) {
        rows.push(Agreement {
            quantity: format!("phi[{};{u}]", states.label(j)),
            analytic: p,
            estimate: phi_est.get(j, u),
        });
    }

    let horizon = origin.time + (kernel.max_age() - origin.age) as i64;
    let curve = crate::smk::survival(kernel, origin, horizon)?;
    let surv_est = estimate_survival(kernel, origin, horizon, n_paths, seed)?;
    for (t, s) in curve.iter().skip(1).filter(|c| c.1 >= min_mass) {
        rows.push(Agreement {
            quantity: format!("survival[{t}]"),
            analytic: s,
            estimate: surv_est[(t - origin.time) as usize],
        });
    }

    let quote = crate::conversion::value_conversion_option(inputs)?;
    let est = estimate_contract_values(inputs, n_paths, seed)?;
    let analytic = [
        quote.tip.assurance,
        quote.tip.annuity,
        quote.tip.premium_value(),
        quote.expected_cash_value,
        quote.pvp_conversion,
        quote.pvp_no_conversion,
        quote.vco_difference,
    ];
    for ((name, e), a) in est.named().into_iter().zip(analytic) {
        rows.push(Agreement {
            quantity: name.to_string(),
            analytic: a,
            estimate: *e,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::geometric_kernel;

    #[test]
    fn death_origin_is_constant() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        let origin = Scenario::new(1, 3, 50, 4);
        let p = sample_trajectory(&k, &origin, 10, &mut path_rng(1, 0)).unwrap();
        assert!(p.jumps.is_empty());
        assert_eq!(p.death_time, Some(4));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        let origin = Scenario::new(0, 2, 50, 1);
        let a = sample_paths(&k, &origin, 30, 500, 7).unwrap();
        let b = sample_paths(&k, &origin, 30, 500, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_paths(&k, &origin, 30, 500, 8).unwrap());
        for p in &a {
            p.check(k.death()).unwrap();
        }
    }

    #[test]
    fn one_step_death_frequency() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        let est = estimate_phi(&k, &Scenario::new(0, 0, 40, 0), 1, 100_000, 11).unwrap();
        let d = est.get(1, 0);
        assert!((d.std_error - (0.2f64 * 0.8 / 1e5).sqrt()).abs() < 1e-4);
        assert!(d.agrees(0.2, 4.0), "{d:?}");
    }

    #[test]
    fn zero_elapsed_time_is_a_point_mass() {
        let k = geometric_kernel(0.2, 40, 140).unwrap();
        let est = estimate_phi(&k, &Scenario::new(0, 3, 50, 2), 2, 1000, 3).unwrap();
        let cell = est.get(0, 3);
        assert_eq!((cell.mean, cell.std_error), (1.0, 0.0));
    }

    #[test]
    fn constant_samples_have_exact_mean() {
        let r = EstimatorResult::from_samples(&vec![0.9; 100_000], 0);
        assert_eq!(r.mean, 0.9);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.z_score(0.9), 0.0);
    }
}

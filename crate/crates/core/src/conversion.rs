//! Valuation of the option to convert a term policy into a permanent one.
//!
//! A policyholder in the 0-scenario `(i, u, x)` holds an `n`-year TIP. At
//! time `n`, alive in the n-scenario `(j, u′, x+n)`, they either convert
//! (keep paying the original TIP premium for life plus a cash value) or buy
//! a new PIP at the rate for `(j, u′, x+n)`. The exercise set collects the
//! n-scenarios where converting costs no more than a new PIP.
//!
//! Present values in the quote are as of the inception time; exercise
//! comparisons are made as of the conversion time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::pricing::{
    fair_premium, ContractTerms, DiscountCurve, PaymentTiming,
    PremiumQuote,
};
use crate::smk::{compute_phi, survival, Kernel, PhiTable, Scenario, SurvivalCurve};

/// Indifference band for exercise decisions: converting wins ties.
pub const TIE_TOLERANCE: f64 = 1e-13;

/// Which expectation multiplies the premium gap in the cash value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CashValueBasis {
    /// `Σ_{h>n} v(h) ΔS_i(u, n; h−1)`: discounted death-time weights of the
    /// unchanged n-scenario.
    #[default]
    DeathBenefit,
    /// Expected present value of the unchanged n-scenario's premium stream.
    PremiumAnnuity,
}

/// Calendar time at which the converted (TIP-basis) premium is priced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionPremiumTime {
    #[default]
    AtConversion,
    AtInception,
}

/// Everything needed to value one conversion option.
#[derive(Debug, Clone)]
pub struct ConversionInputs<'k> {
    kernel: &'k Kernel,
    origin: Scenario,
    term: u32,
    discount: DiscountCurve,
    timing: PaymentTiming,
    premium_time: ConversionPremiumTime,
    cash_basis: CashValueBasis,
}

impl<'k> ConversionInputs<'k> {
    pub fn new(kernel: &'k Kernel, origin: Scenario, term: u32, discount: DiscountCurve) -> Result<Self> {
        kernel.check_scenario(&origin)?;
        if kernel.states().is_death(origin.state) {
            return Err(ModelError::DeadScenario);
        }
        if term == 0 {
            return Err(ModelError::InvalidTerms("conversion term must be at least 1".into()));
        }
        if origin.age + term > kernel.max_age() {
            return Err(ModelError::InvalidTerms(format!(
                "age {} plus term {term} exceeds the maximum age {}",
                origin.age,
                kernel.max_age()
            )));
        }
        Ok(Self {
            kernel,
            origin,
            term,
            discount,
            timing: PaymentTiming::Immediate,
            premium_time: ConversionPremiumTime::AtConversion,
            cash_basis: CashValueBasis::DeathBenefit,
        })
    }

    pub fn with_timing(mut self, timing: PaymentTiming) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_premium_time(mut self, premium_time: ConversionPremiumTime) -> Self {
        self.premium_time = premium_time;
        self
    }

    pub fn with_cash_basis(mut self, basis: CashValueBasis) -> Self {
        self.cash_basis = basis;
        self
    }

    pub fn kernel(&self) -> &'k Kernel {
        self.kernel
    }

    pub fn origin(&self) -> &Scenario {
        &self.origin
    }

    pub fn term(&self) -> u32 {
        self.term
    }

    pub fn discount(&self) -> &DiscountCurve {
        &self.discount
    }

    pub fn timing(&self) -> PaymentTiming {
        self.timing
    }

    pub fn premium_time(&self) -> ConversionPremiumTime {
        self.premium_time
    }

    pub fn cash_basis(&self) -> CashValueBasis {
        self.cash_basis
    }

    pub fn tip_terms(&self) -> ContractTerms {
        ContractTerms::tip(self.term).with_timing(self.timing)
    }

    pub fn pip_terms(&self) -> ContractTerms {
        ContractTerms::pip().with_timing(self.timing)
    }

    /// Calendar time of the conversion decision.
    pub fn conversion_time(&self) -> i64 {
        self.origin.time + self.term as i64
    }

    /// Discount from inception to the conversion time.
    pub fn conversion_discount(&self) -> f64 {
        self.discount.between(self.origin.time, self.conversion_time())
    }

    /// The n-scenario `(j, u′, x+n)` at the conversion time.
    pub fn n_scenario(&self, state: usize, backward: u32) -> Scenario {
        Scenario::new(state, backward, self.origin.age + self.term, self.conversion_time())
    }

    /// The state-unchanged n-scenario `(i, u, x+n)`.
    pub fn unchanged_scenario(&self) -> Scenario {
        self.n_scenario(self.origin.state, self.origin.backward)
    }

    /// The original TIP's fair premium.
    pub fn tip_quote(&self) -> Result<PremiumQuote> {
        fair_premium(self.kernel, &self.origin, &self.tip_terms(), &self.discount)
    }

    /// State and backward distribution at the conversion time.
    pub fn conversion_phi(&self) -> Result<PhiTable> {
        compute_phi(self.kernel, &self.origin, self.conversion_time())
    }
}

/// One reachable living n-scenario and its exercise comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub state: usize,
    pub backward: u32,
    /// Probability of this n-scenario seen from the origin.
    pub phi: f64,
    /// New-PIP fair premium in this n-scenario.
    pub pip_premium: f64,
    /// New-PIP premium annuity, as of the conversion time.
    pub pip_annuity: f64,
    /// Expected premiums of a new PIP, as of the conversion time.
    pub new_pip_cost: f64,
    /// Expected continuation premiums plus cash value, as of the conversion time.
    pub convert_cost: f64,
    /// Closed-form bracket `v(n)·𝒫̃ − 𝒱 − p·Σ_h Σ_r v(r) ΔS(h)`, as of inception.
    pub bracket: f64,
    pub member: bool,
}

/// The exercise set with its per-scenario ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSet {
    pub conversion_time: i64,
    pub entries: Vec<LedgerEntry>,
}

impl ExerciseSet {
    pub fn members(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(|e| e.member)
    }

    pub fn contains(&self, state: usize, backward: u32) -> bool {
        self.entry(state, backward).is_some_and(|e| e.member)
    }

    pub fn entry(&self, state: usize, backward: u32) -> Option<&LedgerEntry> {
        self.entries
            .iter()
            .find(|e| e.state == state && e.backward == backward)
    }

    pub fn is_empty(&self) -> bool {
        self.members().next().is_none()
    }
}

/// Full valuation of a conversion option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionQuote {
    pub tip: PremiumQuote,
    /// New-PIP quote in the unchanged n-scenario.
    pub unchanged_pip: PremiumQuote,
    /// TIP-basis quote in the unchanged n-scenario (the converted premium rate).
    pub conversion_tip: PremiumQuote,
    pub expected_cash_value: f64,
    pub exercise_set: ExerciseSet,
    pub pvp_no_conversion: f64,
    pub pvp_conversion: f64,
    pub vco_difference: f64,
    pub vco_closed_form: f64,
}

/// Pieces of the cash value.
pub(crate) struct CashValue {
    pub(crate) unchanged_pip: PremiumQuote,
    pub(crate) conversion_tip: PremiumQuote,
    pub(crate) value: f64,
}

pub(crate) fn cash_value(inputs: &ConversionInputs<'_>) -> Result<CashValue> {
    let kernel = inputs.kernel;
    let unchanged = inputs.unchanged_scenario();
    let pip_terms = inputs.pip_terms();
    let unchanged_pip = fair_premium(kernel, &unchanged, &pip_terms, &inputs.discount)?;

    let remaining = kernel.max_age() - unchanged.age;
    let tip_terms = ContractTerms::tip(inputs.term.min(remaining)).with_timing(inputs.timing);
    let tip_scenario = match inputs.premium_time {
        ConversionPremiumTime::AtConversion => unchanged,
        ConversionPremiumTime::AtInception => Scenario { time: inputs.origin.time, ..unchanged },
    };
    let conversion_tip = fair_premium(kernel, &tip_scenario, &tip_terms, &inputs.discount)?;

    let gap = unchanged_pip.premium - conversion_tip.premium;
    let weight = match inputs.cash_basis {
        CashValueBasis::DeathBenefit => {
            let term = pip_terms.effective_term(kernel, &unchanged)?;
            let curve = survival(kernel, &unchanged, unchanged.time + term as i64)?;
            let origin_time = inputs.origin.time;
            let mut sum = 0.0;
            for h in unchanged.time + 1..=curve.horizon() {
                sum += inputs.discount.between(origin_time, h) * curve.death_pmf(h)?;
            }
            sum
        }
        CashValueBasis::PremiumAnnuity => inputs.conversion_discount() * unchanged_pip.annuity,
    };
    Ok(CashValue {
        unchanged_pip,
        conversion_tip,
        value: gap * weight,
    })
}

/// Expected cash value `𝒱_{i,u}(x+n, n)`, as of inception, computed in the
/// unchanged n-scenario.
pub fn expected_cash_value(inputs: &ConversionInputs<'_>) -> Result<f64> {
    cash_value(inputs).map(|c| c.value)
}

fn n_scenario_curve(inputs: &ConversionInputs<'_>, scenario: &Scenario) -> Result<SurvivalCurve> {
    let horizon = scenario.time + (inputs.kernel.max_age() - scenario.age) as i64;
    survival(inputs.kernel, scenario, horizon)
}

fn schedule_start(inputs: &ConversionInputs<'_>) -> i64 {
    match inputs.timing {
        PaymentTiming::Immediate => inputs.conversion_time() + 1,
        PaymentTiming::Due => inputs.conversion_time(),
    }
}

fn continuation_on(inputs: &ConversionInputs<'_>, curve: &SurvivalCurve) -> Result<f64> {
    let origin_time = inputs.origin.time;
    let mut sum = 0.0;
    for r in schedule_start(inputs)..=curve.horizon() {
        sum += inputs.discount.between(origin_time, r) * curve.at(r)?;
    }
    Ok(sum)
}

/// Expected present value, as of inception, of a unit premium stream paid
/// from the conversion time onward while alive, starting in the n-scenario
/// `(state, backward, x+n)`.
pub fn continuation_annuity(inputs: &ConversionInputs<'_>, state: usize, backward: u32) -> Result<f64> {
    inputs.kernel.states().check(state)?;
    if inputs.kernel.states().is_death(state) {
        return Ok(0.0);
    }
    let phi = inputs.conversion_phi()?;
    if phi.get(state, backward) <= 0.0 {
        return Err(ModelError::Unreachable { state, backward });
    }
    let scenario = inputs.n_scenario(state, backward);
    continuation_on(inputs, &n_scenario_curve(inputs, &scenario)?)
}

/// `Σ_h ΔS(h) Σ_{r=first}^{h} v(r)`, with `ΔS(h) = S(h) − S(h+1)`.
fn premium_tail_by_decrements(inputs: &ConversionInputs<'_>, curve: &SurvivalCurve) -> Result<f64> {
    let origin_time = inputs.origin.time;
    let first = schedule_start(inputs);
    let mut paid = 0.0;
    let mut sum = 0.0;
    for h in inputs.conversion_time()..curve.horizon() {
        if h >= first {
            paid += inputs.discount.between(origin_time, h);
        }
        sum += (curve.at(h)? - curve.at(h + 1)?) * paid;
    }
    Ok(sum)
}

fn build_exercise_set(
    inputs: &ConversionInputs<'_>,
    phi: &PhiTable,
    tip: &PremiumQuote,
    cash: &CashValue,
) -> Result<ExerciseSet> {
    let kernel = inputs.kernel;
    let v_n = inputs.conversion_discount();
    let pip_terms = inputs.pip_terms();
    let cells: Vec<(usize, u32, f64)> = phi
        .support()
        .filter(|(j, _, _)| !kernel.states().is_death(*j))
        .collect();
    let entries = cells
        .par_iter()
        .map(|&(state, backward, weight)| {
            let scenario = inputs.n_scenario(state, backward);
            let pip = fair_premium(kernel, &scenario, &pip_terms, &inputs.discount)?;
            let new_pip_cost = pip.premium_value();
            let convert_cost = tip.premium * pip.annuity + cash.value / v_n;
            let tail = premium_tail_by_decrements(inputs, &n_scenario_curve(inputs, &scenario)?)?;
            let bracket = v_n * new_pip_cost - cash.value - tip.premium * tail;
            let member = convert_cost <= new_pip_cost + TIE_TOLERANCE * new_pip_cost.abs().max(1.0);
            Ok(LedgerEntry {
                state,
                backward,
                phi: weight,
                pip_premium: pip.premium,
                pip_annuity: pip.annuity,
                new_pip_cost,
                convert_cost,
                bracket,
                member,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExerciseSet {
        conversion_time: inputs.conversion_time(),
        entries,
    })
}

/// The exercise set `C_{i,u}(x, n)` with its ledger.
pub fn exercise_set(inputs: &ConversionInputs<'_>) -> Result<ExerciseSet> {
    let tip = inputs.tip_quote()?;
    let phi = inputs.conversion_phi()?;
    let cash = cash_value(inputs)?;
    build_exercise_set(inputs, &phi, &tip, &cash)
}

fn pvp_no_conversion_from(inputs: &ConversionInputs<'_>, tip: &PremiumQuote, set: &ExerciseSet) -> f64 {
    let v_n = inputs.conversion_discount();
    tip.premium_value()
        + set
            .entries
            .iter()
            .map(|e| e.phi * v_n * e.new_pip_cost)
            .sum::<f64>()
}

fn pvp_conversion_from(
    inputs: &ConversionInputs<'_>,
    tip: &PremiumQuote,
    set: &ExerciseSet,
    cash_value: f64,
) -> Result<f64> {
    let v_n = inputs.conversion_discount();
    let mut total = tip.premium_value();
    for e in &set.entries {
        if e.member {
            let scenario = inputs.n_scenario(e.state, e.backward);
            let continuation = continuation_on(inputs, &n_scenario_curve(inputs, &scenario)?)?;
            total += e.phi * (tip.premium * continuation + cash_value);
        } else {
            total += e.phi * v_n * e.new_pip_cost;
        }
    }
    Ok(total)
}

/// `E[PVP | no conversion]`: TIP premiums plus a new PIP bought in whatever
/// n-scenario is realized.
pub fn expected_pvp_no_conversion(inputs: &ConversionInputs<'_>) -> Result<f64> {
    let tip = inputs.tip_quote()?;
    let set = exercise_set(inputs)?;
    Ok(pvp_no_conversion_from(inputs, &tip, &set))
}

/// `E[PVP | conversion]`: TIP premiums, then a new PIP off the exercise set
/// or the original premium plus cash value on it.
pub fn expected_pvp_conversion(inputs: &ConversionInputs<'_>) -> Result<f64> {
    let tip = inputs.tip_quote()?;
    let phi = inputs.conversion_phi()?;
    let cash = cash_value(inputs)?;
    let set = build_exercise_set(inputs, &phi, &tip, &cash)?;
    pvp_conversion_from(inputs, &tip, &set, cash.value)
}

/// Values the conversion option in both the difference and closed-form
/// representations.
pub fn value_conversion_option(inputs: &ConversionInputs<'_>) -> Result<ConversionQuote> {
    let tip = inputs.tip_quote()?;
    let phi = inputs.conversion_phi()?;
    let cash = cash_value(inputs)?;
    let set = build_exercise_set(inputs, &phi, &tip, &cash)?;

    if let Some(bad) = set.members().find(|e| e.bracket < -1e-12) {
        return Err(ModelError::Invariant(format!(
            "exercise-set member ({}, {}) has negative bracket {}",
            bad.state, bad.backward, bad.bracket
        )));
    }

    let pvp_no_conversion = pvp_no_conversion_from(inputs, &tip, &set);
    let pvp_conversion = pvp_conversion_from(inputs, &tip, &set, cash.value)?;
    let vco_closed_form = set.members().map(|e| e.phi * e.bracket).sum();

    Ok(ConversionQuote {
        tip,
        unchanged_pip: cash.unchanged_pip,
        conversion_tip: cash.conversion_tip,
        expected_cash_value: cash.value,
        exercise_set: set,
        pvp_no_conversion,
        pvp_conversion,
        vco_difference: pvp_no_conversion - pvp_conversion,
        vco_closed_form,
    })
}

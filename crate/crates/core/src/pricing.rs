//! Term (TIP) and permanent (PIP) insurance pricing under the equivalence
//! principle.
//!
//! All values are expressed as of the scenario's calendar time, which is
//! the issue time of the contract. The benefit is one unit paid at the end
//! of the year of death. Premiums follow a payment schedule:
//!
//! * `Immediate`: at `issue + r` for `r = 1..=term` while alive,
//! * `Due`: at `issue + r` for `r = 0..term` while alive.
//!
//! A PIP runs until the maximum age, where death is certain, so its sums are
//! finite and exact.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::smk::{survival, Kernel, Scenario, SurvivalCurve};

/// Per-period discount factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiscountCurve {
    /// The same factor `δ` for every period.
    Constant(f64),
    /// `factors[k]` discounts calendar period `(k, k+1]`; periods outside the
    /// array reuse the nearest factor.
    PerPeriod(Vec<f64>),
}

impl DiscountCurve {
    pub fn constant(delta: f64) -> Result<Self> {
        check_factor(delta)?;
        Ok(Self::Constant(delta))
    }

    pub fn per_period(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(ModelError::InvalidDiscount("no discount factors".into()));
        }
        factors.iter().try_for_each(|f| check_factor(*f))?;
        Ok(Self::PerPeriod(factors))
    }

    /// Factor for the period ending at calendar time `period`.
    pub fn factor(&self, period: i64) -> f64 {
        match self {
            Self::Constant(d) => *d,
            Self::PerPeriod(f) => f[(period - 1).clamp(0, f.len() as i64 - 1) as usize],
        }
    }

    /// Value at calendar time `from` of one unit paid at `to ≥ from`.
    pub fn between(&self, from: i64, to: i64) -> f64 {
        debug_assert!(to >= from);
        match self {
            Self::Constant(d) => d.powi((to - from) as i32),
            Self::PerPeriod(_) => (from + 1..=to).map(|p| self.factor(p)).product(),
        }
    }

    /// Value at time zero of one unit paid at `r ≥ 0`.
    pub fn discount(&self, r: i64) -> f64 {
        self.between(0, r)
    }
}

fn check_factor(f: f64) -> Result<()> {
    if f.is_finite() && f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidDiscount(format!(
            "factor {f} is outside (0, 1]"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Tip,
    Pip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaymentTiming {
    #[default]
    Immediate,
    Due,
}

impl PaymentTiming {
    /// Offsets (relative to issue) of the premium dates for `term` payments.
    pub fn offsets(self, term: u32) -> std::ops::RangeInclusive<i64> {
        match self {
            Self::Immediate => 1..=term as i64,
            Self::Due => 0..=term as i64 - 1,
        }
    }
}

/// Contract kind, term and premium schedule; the benefit is one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractTerms {
    pub kind: ContractKind,
    /// Term in years for a TIP; ignored for a PIP.
    pub term: u32,
    pub timing: PaymentTiming,
}

impl ContractTerms {
    pub fn tip(term: u32) -> Self {
        Self {
            kind: ContractKind::Tip,
            term,
            timing: PaymentTiming::Immediate,
        }
    }

    pub fn pip() -> Self {
        Self {
            kind: ContractKind::Pip,
            term: 0,
            timing: PaymentTiming::Immediate,
        }
    }

    pub fn with_timing(mut self, timing: PaymentTiming) -> Self {
        self.timing = timing;
        self
    }

    /// Coverage length for a contract issued in `scenario`.
    pub fn effective_term(&self, kernel: &Kernel, scenario: &Scenario) -> Result<u32> {
        let remaining = kernel.max_age().saturating_sub(scenario.age);
        match self.kind {
            ContractKind::Tip if self.term == 0 || self.term > remaining => {
                Err(ModelError::InvalidTerms(format!(
                    "TIP term {} must lie in 1..={remaining} at age {}",
                    self.term, scenario.age
                )))
            }
            ContractKind::Tip => Ok(self.term),
            ContractKind::Pip if remaining == 0 => Err(ModelError::InvalidTerms(format!(
                "no coverage left at age {}",
                scenario.age
            ))),
            ContractKind::Pip => Ok(remaining),
        }
    }
}

/// A fair premium together with the expectations it balances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumQuote {
    pub scenario: Scenario,
    pub terms: ContractTerms,
    /// Expected present value of the death benefit.
    pub assurance: f64,
    /// Expected present value of a unit premium stream.
    pub annuity: f64,
    pub premium: f64,
    /// `assurance − premium · annuity`.
    pub residual: f64,
}

impl PremiumQuote {
    /// Expected present value of premiums, `premium · annuity`.
    pub fn premium_value(&self) -> f64 {
        self.premium * self.annuity
    }
}

/// `Σ_{h=1}^{term} v(issue, issue+h) · P(death at issue+h)`.
pub(crate) fn assurance_on(curve: &SurvivalCurve, term: u32, disc: &DiscountCurve) -> Result<f64> {
    let issue = curve.start();
    let mut sum = 0.0;
    for h in 1..=term as i64 {
        sum += disc.between(issue, issue + h) * curve.death_pmf(issue + h)?;
    }
    Ok(sum)
}

/// `Σ_r v(issue, issue+r) · S(issue+r)` over the payment schedule.
pub(crate) fn annuity_on(
    curve: &SurvivalCurve,
    term: u32,
    timing: PaymentTiming,
    disc: &DiscountCurve,
) -> Result<f64> {
    let issue = curve.start();
    let mut sum = 0.0;
    for r in timing.offsets(term) {
        sum += disc.between(issue, issue + r) * curve.at(issue + r)?;
    }
    Ok(sum)
}

fn curve_for(kernel: &Kernel, scenario: &Scenario, term: u32) -> Result<SurvivalCurve> {
    if kernel.states().is_death(scenario.state) {
        return Err(ModelError::DeadScenario);
    }
    survival(kernel, scenario, scenario.time + term as i64)
}

/// Expected present value of the unit death benefit.
pub fn expected_assurance(
    kernel: &Kernel,
    scenario: &Scenario,
    terms: &ContractTerms,
    disc: &DiscountCurve,
) -> Result<f64> {
    let term = terms.effective_term(kernel, scenario)?;
    assurance_on(&curve_for(kernel, scenario, term)?, term, disc)
}

/// Expected present value of a unit premium paid on each schedule date
/// while alive.
pub fn expected_premium_annuity(
    kernel: &Kernel,
    scenario: &Scenario,
    terms: &ContractTerms,
    disc: &DiscountCurve,
) -> Result<f64> {
    let term = terms.effective_term(kernel, scenario)?;
    annuity_on(&curve_for(kernel, scenario, term)?, term, terms.timing, disc)
}

/// Level premium equating expected premiums and expected benefits.
pub fn fair_premium(
    kernel: &Kernel,
    scenario: &Scenario,
    terms: &ContractTerms,
    disc: &DiscountCurve,
) -> Result<PremiumQuote> {
    let term = terms.effective_term(kernel, scenario)?;
    let curve = curve_for(kernel, scenario, term)?;
    let assurance = assurance_on(&curve, term, disc)?;
    let annuity = annuity_on(&curve, term, terms.timing, disc)?;
    if annuity <= 0.0 {
        return Err(ModelError::NoPremiumBasis);
    }
    let premium = assurance / annuity;
    let mut quote = PremiumQuote {
        scenario: *scenario,
        terms: *terms,
        assurance,
        annuity,
        premium,
        residual: 0.0,
    };
    quote.residual = equivalence_residual(&quote);
    Ok(quote)
}

/// `𝒜 − premium · annuity`; zero for a fair quote.
pub fn equivalence_residual(quote: &PremiumQuote) -> f64 {
    quote.assurance - quote.premium * quote.annuity
}

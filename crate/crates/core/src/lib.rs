//! Conversion-option valuation under an age-indexed, discrete-time
//! semi-Markov model of policyholder health.
//!
//! * [`smk`]: kernel storage, transition probabilities with initial and
//!   final backward, survival curves.
//! * [`pricing`]: term (TIP) and permanent (PIP) policy premiums.
//! * [`conversion`]: cash value, exercise set and the value of the
//!   conversion option.
//! * [`oracle`]: Monte Carlo estimates of the same quantities.
//! * [`io`]: kernel files, validation, parametric kernels and CSV export.

pub mod conversion;
pub mod error;
pub mod format;
pub mod io;
pub mod oracle;
pub mod pricing;
pub mod smk;

pub use conversion::{
    continuation_annuity, expected_cash_value, expected_pvp_conversion,
    expected_pvp_no_conversion, exercise_set, value_conversion_option, CashValueBasis,
    ConversionInputs, ConversionPremiumTime, ConversionQuote, ExerciseSet, LedgerEntry,
};
pub use error::{ModelError, Result};
pub use pricing::{
    equivalence_residual, expected_assurance, expected_premium_annuity, fair_premium,
    ContractKind, ContractTerms, DiscountCurve, PaymentTiming, PremiumQuote,
};
pub use smk::{
    compute_phi, cumulate_kernel, death_pmf, embedded_probability, sojourn_survival, survival,
    waiting_time_cdf, CalendarModifier, Kernel, KernelBuilder, PhiTable, Scenario, StateSpace,
    SurvivalCurve,
};

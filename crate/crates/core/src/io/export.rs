//! CSV tables with fixed headers and 17-significant-digit numbers.
//!
//! | table             | header                                                      |
//! |-------------------|-------------------------------------------------------------|
//! | φ table           | `j,u_prime,probability`                                     |
//! | survival curve    | `t,survival,death_pmf` (blank pmf on the first row)         |
//! | quotes            | `quantity,value`                                            |
//! | exercise ledger   | `j,u_prime,phi,convert_cost,new_pip_cost,bracket,member`    |

use std::io::{Read, Write};
use std::path::Path;

use super::{file_error, IoError};
use crate::conversion::{ConversionQuote, ExerciseSet};
use crate::error::ModelError;
use crate::format::g17;
use crate::pricing::PremiumQuote;
use crate::smk::{PhiTable, Scenario, StateSpace, SurvivalCurve};

pub trait CsvTable {
    fn header(&self) -> &'static [&'static str];
    fn rows(&self) -> Vec<Vec<String>>;
}

/// A φ table with state labels for the `j` column.
pub struct LabeledPhi<'a> {
    pub table: &'a PhiTable,
    pub states: &'a StateSpace,
}

impl CsvTable for LabeledPhi<'_> {
    fn header(&self) -> &'static [&'static str] {
        &["j", "u_prime", "probability"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.table
            .cells()
            .map(|(j, u, p)| vec![self.states.label(j).to_string(), u.to_string(), g17(p)])
            .collect()
    }
}

impl CsvTable for SurvivalCurve {
    fn header(&self) -> &'static [&'static str] {
        &["t", "survival", "death_pmf"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let start = self.start();
        self.iter()
            .map(|(t, s)| {
                let pmf = if t == start {
                    String::new()
                } else {
                    g17(self.death_pmf(t).expect("t lies inside the curve"))
                };
                vec![t.to_string(), g17(s), pmf]
            })
            .collect()
    }
}

/// Named scalar results.
pub struct QuoteTable(pub Vec<(String, f64)>);

impl From<&PremiumQuote> for QuoteTable {
    fn from(q: &PremiumQuote) -> Self {
        Self(vec![
            ("premium".into(), q.premium),
            ("assurance".into(), q.assurance),
            ("annuity".into(), q.annuity),
            ("residual".into(), q.residual),
        ])
    }
}

impl From<&ConversionQuote> for QuoteTable {
    fn from(q: &ConversionQuote) -> Self {
        Self(vec![
            ("tip_premium".into(), q.tip.premium),
            ("unchanged_pip_premium".into(), q.unchanged_pip.premium),
            ("conversion_premium".into(), q.conversion_tip.premium),
            ("expected_cash_value".into(), q.expected_cash_value),
            ("pvp_no_conversion".into(), q.pvp_no_conversion),
            ("pvp_conversion".into(), q.pvp_conversion),
            ("vco_difference".into(), q.vco_difference),
            ("vco_closed_form".into(), q.vco_closed_form),
        ])
    }
}

impl CsvTable for QuoteTable {
    fn header(&self) -> &'static [&'static str] {
        &["quantity", "value"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0.iter().map(|(k, v)| vec![k.clone(), g17(*v)]).collect()
    }
}

/// Exercise-set ledger; costs are as of the conversion time, brackets as of
/// inception.
pub struct LabeledLedger<'a> {
    pub set: &'a ExerciseSet,
    pub states: &'a StateSpace,
}

impl CsvTable for LabeledLedger<'_> {
    fn header(&self) -> &'static [&'static str] {
        &["j", "u_prime", "phi", "convert_cost", "new_pip_cost", "bracket", "member"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.set
            .entries
            .iter()
            .map(|e| {
                vec![
                    self.states.label(e.state).to_string(),
                    e.backward.to_string(),
                    g17(e.phi),
                    g17(e.convert_cost),
                    g17(e.new_pip_cost),
                    g17(e.bracket),
                    e.member.to_string(),
                ]
            })
            .collect()
    }
}

pub fn write_table(table: &dyn CsvTable, writer: impl Write) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(table.header())?;
    for row in table.rows() {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

pub fn export_table(table: &dyn CsvTable, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(file_error(path))?;
    write_table(table, std::io::BufWriter::new(file))
}

/// Reads a survival export back into a curve for `origin`.
pub fn read_survival_csv(reader: impl Read, origin: Scenario) -> Result<SurvivalCurve, IoError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "survival", "death_pmf"] {
        return Err(ModelError::InvalidInput(format!("unexpected survival header {header:?}")).into());
    }
    let mut values = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record?;
        let bad = |what: &str| ModelError::InvalidInput(format!("row {}: invalid {what}", k + 1));
        let t: i64 = record[0].parse().map_err(|_| bad("time"))?;
        if t != origin.time + k as i64 {
            return Err(ModelError::InvalidInput(format!(
                "row {}: expected time {}, found {t}",
                k + 1,
                origin.time + k as i64
            ))
            .into());
        }
        values.push(record[1].parse::<f64>().map_err(|_| bad("survival"))?);
    }
    Ok(SurvivalCurve::from_values(origin, values)?)
}

//! Option resolution: command-line flags first, then the config file, then
//! defaults.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use semiconv::{CashValueBasis, ConversionPremiumTime, PaymentTiming};

use crate::CliError;

/// Environment variable with extra directories to search for kernel files.
pub const KERNEL_PATH_VAR: &str = "SMK_KERNEL_PATH";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    Immediate,
    Due,
}

impl From<Timing> for PaymentTiming {
    fn from(t: Timing) -> Self {
        match t {
            Timing::Immediate => PaymentTiming::Immediate,
            Timing::Due => PaymentTiming::Due,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PremiumTime {
    AtConversion,
    AtInception,
}

impl From<PremiumTime> for ConversionPremiumTime {
    fn from(t: PremiumTime) -> Self {
        match t {
            PremiumTime::AtConversion => ConversionPremiumTime::AtConversion,
            PremiumTime::AtInception => ConversionPremiumTime::AtInception,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CashBasis {
    DeathBenefit,
    PremiumAnnuity,
}

impl From<CashBasis> for CashValueBasis {
    fn from(b: CashBasis) -> Self {
        match b {
            CashBasis::DeathBenefit => CashValueBasis::DeathBenefit,
            CashBasis::PremiumAnnuity => CashValueBasis::PremiumAnnuity,
        }
    }
}

/// Every option that may also come from `--config`. Paths are relative to
/// the config file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kernel: Option<PathBuf>,
    pub state: Option<String>,
    pub backward: Option<u32>,
    pub age: Option<u32>,
    pub time: Option<i64>,
    pub horizon: Option<i64>,
    pub term: Option<u32>,
    pub discount: Option<f64>,
    pub discount_file: Option<PathBuf>,
    pub timing: Option<Timing>,
    pub premium_time: Option<PremiumTime>,
    pub cash_basis: Option<CashBasis>,
    pub paths: Option<u64>,
    pub seed: Option<u64>,
    pub min_mass: Option<f64>,
    pub max_z: Option<f64>,
    pub output: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.kernel,
            &mut config.discount_file,
            &mut config.output,
            &mut config.ledger,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

/// Flag value, else config value.
pub fn pick<T: Clone>(flag: &Option<T>, config: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| config.clone())
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

/// Finds a kernel file as given, then in each directory of
/// `SMK_KERNEL_PATH`; a missing `.kernel` extension is also tried.
pub fn resolve_kernel(path: &Path) -> Result<PathBuf, CliError> {
    let candidates = |p: &Path| {
        let mut v = vec![p.to_path_buf()];
        if p.extension().is_none() {
            v.push(p.with_extension("kernel"));
        }
        v
    };
    for c in candidates(path) {
        if c.is_file() {
            return Ok(c);
        }
    }
    if path.is_relative() {
        if let Some(dirs) = std::env::var_os(KERNEL_PATH_VAR) {
            for dir in std::env::split_paths(&dirs) {
                for c in candidates(&dir.join(path)) {
                    if c.is_file() {
                        return Ok(c);
                    }
                }
            }
        }
    }
    Err(CliError::Usage(format!(
        "kernel file {} not found (also searched {KERNEL_PATH_VAR})",
        path.display()
    )))
}

/// Per-period discount factors, one per line; `#` starts a comment.
pub fn read_discount_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read discount file {}: {e}", path.display())))?;
    let mut factors = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f = line.parse::<f64>().map_err(|_| {
            CliError::Usage(format!("{}:{}: `{line}` is not a number", path.display(), k + 1))
        })?;
        factors.push(f);
    }
    Ok(factors)
}
